import os
import csv
import sys
import json
import argparse

from locator import REFERENCE_GEOMETRY

# Reports are single long JSON fields.
csv.field_size_limit(sys.maxsize)

# 3% of the distance between the sensors
DEFAULT_TOLERANCE_M = 0.03 * REFERENCE_GEOMETRY.sensor_spacing_m

def read_result_file(file_path):
    """
    Reads a result file where each line is formatted as: seed<TAB>report-json.
    Returns a dictionary mapping the seed to the parsed report, or to the raw
    string when the run failed.
    """
    data = {}
    with open(file_path, 'r', encoding='utf-8') as f:
        reader = csv.reader(f, delimiter='\t', quoting=csv.QUOTE_NONE)
        for line in reader:
            if len(line) < 2:
                continue
            seed = line[0].strip()
            try:
                data[seed] = json.loads(line[1])
            except json.JSONDecodeError:
                data[seed] = line[1].strip()
    return data

def run_hits(report, tolerance_m):
    """
    A run hits when every true source has an ICA location within tolerance_m.
    """
    truth = report["truth"]["true_positions_m"]
    located = report["methods"]["ica"]
    for k, y in enumerate(truth):
        errors = [abs(e["coordinate_m"] - y) for e in located if e.get("matched_source") == k]
        if not errors or min(errors) > tolerance_m:
            return False
    return True

def compute_location_score(result_file, tolerance_m=DEFAULT_TOLERANCE_M):
    """
    Fraction of runs whose ICA locations all fall within the tolerance.
    Failed runs count as misses.
    """
    results = read_result_file(result_file)

    total = len(results)
    if total == 0:
        return 0.0, 0, 0

    hits = sum(1 for report in results.values() if isinstance(report, dict) and run_hits(report, tolerance_m))
    return hits / total, hits, total

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Evaluate the location score of a seed sweep.")
    parser.add_argument('--result_file', type=str, required=True, help="Path to the sweep results (format: seed<TAB>report-json).")
    parser.add_argument('--tolerance_m', type=float, default=DEFAULT_TOLERANCE_M, help="Largest accepted location error in meters.")

    args = parser.parse_args()

    score, hit_count, total_count = compute_location_score(args.result_file, args.tolerance_m)

    eval_file = "eval_score.txt"
    # Append the scores to the evaluation file, do not overwrite.
    with open(eval_file, "a", encoding="utf-8") as f:
        f.write(f"- {os.path.basename(args.result_file)}\n")
        f.write(f"  location_score: {score:.4f} ({hit_count} / {total_count})\n")

    print(f"Scores have been appended to {eval_file}")
