"""Utility functions for loading and saving JSON and CSV files."""

import csv
import json


def load_json_file(file_path):
    """Load a JSON file."""
    with open(file_path, 'r', encoding='utf-8') as file:
        return json.load(file)


def save_to_json_file(data, file_path):
    """Save data to a JSON file with stable key order and indentation."""
    with open(file_path, 'w', encoding='utf-8') as file:
        json.dump(data, file, indent=2, sort_keys=True)
        file.write('\n')


def save_to_csv_file(header, rows, file_path):
    """Save rows (iterables of cells) to a CSV file under the given header."""
    with open(file_path, 'w', encoding='utf-8', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def load_csv_file(file_path):
    """Load a CSV file as a list of dicts keyed by the header."""
    with open(file_path, 'r', encoding='utf-8', newline='') as file:
        return list(csv.DictReader(file))
