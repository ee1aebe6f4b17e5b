import os
import json
import time
import argparse
import multiprocessing as mp
from tqdm import tqdm
import pandas as pd

from aebss import load_ica_config, load_scenario, run_pipeline, setup_logging

def execute_single_seed(args_tuple):
    """
    Worker function running the full pipeline for one seed.
    This function is designed to be called by a multiprocessing pool.

    Args:
        args_tuple (tuple): A tuple containing seed, scenario path and config path (or None).

    Returns:
        dict: The seed, status ("success" or "error"), data (report or error
              message) and the run duration.
    """
    seed, scenario_path, config_path = args_tuple
    try:
        scenario = load_scenario(scenario_path, seed)
        config = load_ica_config(config_path, seed, fallback=scenario.ica)
        start_time = time.time()
        report = run_pipeline(scenario, config)
        duration = round(time.time() - start_time, 4)
        return {"seed": seed, "status": "success", "data": report, "duration": duration}
    except Exception as e:
        return {"seed": seed, "status": "error", "data": str(e), "duration": 0}

def seed_statistics(results):
    """Mean and max location error per method over the successful runs."""
    rows = []
    for res in results:
        if res["status"] != "success":
            continue
        for method, entries in res["data"]["methods"].items():
            for entry in entries:
                rows.append({"method": method, "error_mm": entry["error_mm"]})
    if not rows:
        return pd.DataFrame(columns=["method", "mean_error_mm", "max_error_mm", "runs"])
    frame = pd.DataFrame(rows)
    stats = frame.groupby("method")["error_mm"].agg(["mean", "max", "count"]).reset_index()
    stats.columns = ["method", "mean_error_mm", "max_error_mm", "runs"]
    return stats.round(4).sort_values("method")

def run_seeds_parallel(scenario_path, config_path, seeds, output_file, num_workers):
    """
    Runs the pipeline once per seed in parallel.
    Saves the reports and per-method error statistics to output files.

    Args:
        scenario_path (str): Scenario JSON.
        config_path (str | None): ICA config JSON; the scenario's own section is used when None.
        seeds (list[int]): Seeds to run.
        output_file (str): Path to save one `seed<TAB>report-json` line per seed.
        num_workers (int): Number of parallel processes to use.
    """
    if not os.path.exists(scenario_path):
        print(f"[✗] Error: Scenario file not found at {scenario_path}")
        return

    tasks = [(seed, scenario_path, config_path) for seed in seeds]

    print(f"--> [Parallel Execution]: Running {len(tasks)} seeds with {num_workers} workers...")
    with mp.Pool(processes=num_workers) as pool:
        all_results = list(tqdm(pool.imap_unordered(execute_single_seed, tasks), total=len(tasks)))

    # Sort by seed so the output does not depend on completion order
    all_results.sort(key=lambda r: r["seed"])

    output_lines = []
    for res in all_results:
        if res["status"] == "success":
            output_lines.append(f"{res['seed']}\t{json.dumps(res['data'])}\n")
        else:
            output_lines.append(f"{res['seed']}\tError: {res['data']}\n")

    with open(output_file, "w", encoding="utf-8") as f:
        f.writelines(output_lines)
    print(f"\n[✓] All seed reports saved to {output_file}")

    stats_file = os.path.splitext(output_file)[0] + "_stats.csv"
    seed_statistics(all_results).to_csv(stats_file, index=False)
    print(f"[✓] Location statistics saved to {stats_file}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run the separation and location pipeline over many seeds in parallel.")
    parser.add_argument('--scenario', type=str, required=True, help="Path to the scenario JSON.")
    parser.add_argument('--config', type=str, default=None, help="Path to an ICA config JSON (default: the scenario's ica section).")
    parser.add_argument('--seeds', type=int, nargs='+', default=[1, 2, 3, 4, 5], help="Seeds to run.")
    parser.add_argument('--output_file', type=str, default='seed_results.txt', help="Path to the output file for saving reports.")
    parser.add_argument('--num_workers', type=int, default=4, help="Number of parallel processes to use.")

    args = parser.parse_args()

    setup_logging()
    run_seeds_parallel(args.scenario, args.config, args.seeds, args.output_file, args.num_workers)
