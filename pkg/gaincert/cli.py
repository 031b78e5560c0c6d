"""Command-line interface for certified small-signal L2-gain analysis."""

import argparse
import json
import os
import sys
from typing import List, Optional

from .analysis.certificate_check import (check_hji_samples, empirical_gain_lower_bound,
                                         empirical_sandwich, random_band_limited_inputs)
from .analysis.gain_analysis import (GainCertificate, analyze, build_mesh, is_non_increasing,
                                     refinement_sweep, sweep_to_csv)
from .errors import GainCertError
from .geometry.simplex_geometry import refine
from .settings import RunConfig, builtin_config_names, load_run_config, override
from .utils import load_json_file, save_to_json_file

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_CHECK_FAILED = 3


def main(argv: Optional[List[str]] = None):
    """Parse arguments, run the subcommand and exit with its code."""
    sys.exit(run(argv))


def run(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    try:
        config = override(load_run_config(args.config), seed=args.seed, threads=args.threads)
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](config, args)
    except (GainCertError, OSError, ValueError, KeyError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR


def _parse_args(argv: Optional[List[str]]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Certify small-signal L2-gain bounds with CPA and quadratic storage functions."
    )
    subparsers = parser.add_subparsers(dest='command', required=True)
    helps = {
        'analyze': "Compute a gain certificate on the finest configured mesh.",
        'sweep': "Compute gain bounds over successive mesh refinements.",
        'check': "Sample the HJI and simulate the system against a certificate.",
        'simulate': "Simulate random small-signal inputs and report L2 ratios.",
        'export-mesh': "Write the configured mesh as a JSON document.",
    }
    for name, text in helps.items():
        sub = subparsers.add_parser(name, help=text, description=text)
        sub.add_argument(
            '--config',
            required=True,
            help=f"Path to a key = value run configuration, or a built-in name "
                 f"({', '.join(builtin_config_names())})."
        )
        sub.add_argument(
            '--out',
            default='.',
            help="Directory for output files (default: current directory)."
        )
        sub.add_argument(
            '--seed',
            type=int,
            default=None,
            help="Override the random seed of the configuration."
        )
        sub.add_argument(
            '--threads',
            type=int,
            default=None,
            help="Override the number of assembly threads."
        )
        sub.add_argument(
            '--disable-progress-bar',
            action='store_false',
            dest='progress_bar',
            help="Disable the progress bar display."
        )
        if name == 'check':
            sub.add_argument(
                '--certificate',
                default=None,
                help="Certificate to check (default: the configured certificate in --out)."
            )
    return parser.parse_args(argv)


def _output(args: argparse.Namespace, name: str) -> str:
    return os.path.join(args.out, name)


def _final_mesh(config: RunConfig, progress_bar: bool):
    tri = build_mesh(config.box(), config.mode, config.divisions, config.resolved_epsilon(),
                     config.boundary_segments, config.fan_radius)
    for _ in range(config.levels - 1):
        tri = refine(tri, progress_bar=progress_bar)
    return tri


def cmd_analyze(config: RunConfig, args: argparse.Namespace) -> int:
    """Analyse the finest mesh and write the certificate."""
    model = config.model()
    print(f"Step 1: Building mesh ({config.mode} mode, {config.levels} level(s))...")
    tri = _final_mesh(config, args.progress_bar)
    print(f"  Mesh: {tri.num_simplexes} simplexes, {tri.num_vertices} vertices")

    print(f"Step 2: Solving the gain program for {model.name}...")
    cert = analyze(model, tri, config.mode, config.resolved_epsilon(), config.gain_options(args.progress_bar))
    seconds = cert.solver_stats.get('seconds', 0.0)

    path = _output(args, config.certificate)
    save_to_json_file(cert.to_dict(report_timings=config.report_timings), path)
    if not cert.certified:
        print(f"No certificate on this mesh: solver status {cert.status} ({seconds:.2f} s)")
        print(f"Report saved to: {path}")
        return EXIT_INFEASIBLE
    print(f"gamma* = {cert.gamma_star:.6f} on {tri.num_simplexes} simplexes (solve {seconds:.2f} s)")
    print(f"Certificate saved to: {path}")
    return EXIT_OK


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> int:
    """Run the refinement sweep and write the CSV."""
    model = config.model()
    print(f"Step 1: Sweeping {config.levels} mesh level(s) for {model.name}...")
    rows = refinement_sweep(model, config.box(), config.levels, config.mode, config.resolved_epsilon(),
                            divisions=config.divisions, boundary_segments=config.boundary_segments,
                            fan_radius=config.fan_radius, opts=config.gain_options(args.progress_bar))
    for row in rows:
        print(f"  {row.num_simplexes:>7} simplexes: gamma* = {row.gamma_star:.6f} ({row.solve_seconds:.2f} s)")
    if not is_non_increasing(rows):
        print("Warning: gamma* increased under refinement")

    path = _output(args, config.sweep)
    sweep_to_csv(rows, path, config.report_timings)
    print(f"Sweep saved to: {path}")
    return EXIT_OK


def cmd_check(config: RunConfig, args: argparse.Namespace) -> int:
    """Sample the HJI for a certificate and run the simulation sandwich."""
    model = config.model()
    cert_path = args.certificate or _output(args, config.certificate)
    print(f"Step 1: Loading certificate {cert_path}...")
    cert = GainCertificate.from_dict(load_json_file(cert_path))
    if not cert.certified:
        print(f"Certificate has no storage function (status {cert.status})")
        return EXIT_INFEASIBLE

    print(f"Step 2: Sampling the HJI at {config.check_samples} states...")
    hji = check_hji_samples(model, cert.storage, cert.gamma_star, config.box(), config.check_samples,
                            config.check_tol, config.seed, args.progress_bar)
    print(f"  max eigenvalue = {hji.max_violation:.3e} over {hji.num_samples} samples "
          f"({hji.skipped} skipped): {'passed' if hji.passed else 'FAILED'}")

    print(f"Step 3: Simulating {config.sim_inputs} inputs with |u| <= {config.r_u}...")
    inputs = random_band_limited_inputs(config.sim_inputs, config.r_u, model.m, config.seed)
    results = empirical_gain_lower_bound(model, inputs, config.sim_horizon, config.sim_dt, config.box(),
                                         args.progress_bar)
    sandwich = empirical_sandwich(results, cert.gamma_star)
    print(f"  max in-region ratio = {sandwich.max_in_region_ratio:.6f} <= gamma* = {cert.gamma_star:.6f}: "
          f"{'passed' if sandwich.passed else 'FAILED'}")

    passed = hji.passed and sandwich.passed
    path = _output(args, config.report)
    save_to_json_file({'hji': hji.to_dict(), 'sandwich': sandwich.to_dict(), 'passed': passed}, path)
    print(f"Report saved to: {path}")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_simulate(config: RunConfig, args: argparse.Namespace) -> int:
    """Simulate seeded random inputs and write every L2 ratio."""
    model = config.model()
    print(f"Step 1: Simulating {config.sim_inputs} inputs for {model.name}...")
    inputs = random_band_limited_inputs(config.sim_inputs, config.r_u, model.m, config.seed)
    results = empirical_gain_lower_bound(model, inputs, config.sim_horizon, config.sim_dt, config.box(),
                                         args.progress_bar)
    kept = [r.l2_ratio for r in results if r.state_stayed_in_region]
    print(f"  {len(kept)} of {len(results)} trajectories stayed in the region; "
          f"largest ratio {max(kept, default=0.0):.6f}")
    path = _output(args, config.simulation)
    save_to_json_file([r.to_dict() for r in results], path)
    print(f"Simulations saved to: {path}")
    return EXIT_OK


def cmd_export_mesh(config: RunConfig, args: argparse.Namespace) -> int:
    """Write the mesh analyze would use."""
    print("Step 1: Building mesh...")
    tri = _final_mesh(config, args.progress_bar)
    report = tri.validate(seed=config.seed)
    if not report.ok:
        print(f"Warning: mesh validation found problems: {json.dumps(report.to_dict())[:200]}")
    path = _output(args, config.mesh)
    save_to_json_file(tri.to_document(), path)
    print(f"Mesh with {tri.num_simplexes} simplexes saved to: {path}")
    return EXIT_OK


COMMANDS = {
    'analyze': cmd_analyze,
    'sweep': cmd_sweep,
    'check': cmd_check,
    'simulate': cmd_simulate,
    'export-mesh': cmd_export_mesh,
}


if __name__ == '__main__':
    main()
