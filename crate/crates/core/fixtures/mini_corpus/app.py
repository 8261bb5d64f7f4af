import json

from config import load_config
from report import build_report


def main(argv):
    """Command-line entry point for the report tool."""
    try:
        return run_pipeline(argv[1])
    except ValueError as err:
        return handle_error(err)


def run_pipeline(config_path):
    """Load configuration, read records and write the report."""
    config = load_config(config_path)
    records = load_records(config["input"])
    text = build_report(records, config.get("columns", "name,total").split(","))
    write_output(config["output"], text)
    return 0


def load_records(path):
    """Read JSON records from a file."""
    with open(path) as handle:
        return json.load(handle)


def write_output(path, text):
    """Write the report text to a file."""
    with open(path, "w") as handle:
        handle.write(text)


def handle_error(err):
    """Print an error message and return a failure code."""
    print("error:", err)
    return 1
