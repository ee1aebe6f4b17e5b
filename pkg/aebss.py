"""
Command-line front end: synthesize experiments, estimate delays by cross-
correlation or by blind separation, and locate the sources on the band.

    python aebss.py synth     --scenario scenarios/paper-scenario.json --out-dir out/
    python aebss.py ccf       --record out/record.json --prototypes-spacing 0.1
    python aebss.py separate  --record out/record.json --config scenarios/paper-ica.json --out-dir out/
    python aebss.py locate    --filters out/mixing.json
    python aebss.py pipeline  --scenario scenarios/paper-scenario.json --seed 1

Results go to stdout as JSON; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
import time
from typing import Callable, Optional

from pydantic import ValidationError

import record_io
from bss_ica import IcaConfig, run_ica, separation_sir_db
from errors import EXIT_FAILURE, EXIT_INPUT, EXIT_OK, AebssError, ParameterError, PipelineStageError
from filters import filters_to_spectral
from locator import REFERENCE_GEOMETRY, BandGeometry, PrototypeSet, build_prototypes, grnn_locate
from signal_core import correlation_matrix, remove_mean_record
from synth_lab import ScenarioSpec, Synthesis, synthesize
from tdoa import DelayEstimate, delay_from_ccf, delays_from_mixing, max_admissible_delay_samples

logger = logging.getLogger("aebss")

LOG_ENV = "AEBSS_LOG"
DEFAULT_PROTOTYPE_SPACING_M = 0.1
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def setup_logging() -> None:
    """Timestamped lines on stderr; the level comes from AEBSS_LOG."""
    requested = os.environ.get(LOG_ENV, "INFO").upper()
    level = requested if requested in LOG_LEVELS else "INFO"
    logging.basicConfig(
        level=level, format="[%(asctime)s] %(message)s", datefmt="%H:%M:%S", stream=sys.stderr, force=True
    )
    if requested != level:
        logger.warning(f"[!] Unknown {LOG_ENV}={requested!r}; using INFO.")


# ---------------------------------------------------------------- loading


def load_scenario(path: str, seed: Optional[int] = None) -> ScenarioSpec:
    scenario = record_io.load_model(path, ScenarioSpec)
    if seed is not None:
        scenario = scenario.model_copy(update={"seed": seed})
    return scenario


def load_ica_config(path: Optional[str], seed: Optional[int] = None, fallback: Optional[IcaConfig] = None) -> IcaConfig:
    if path:
        config = record_io.load_model(path, IcaConfig)
    else:
        config = fallback or IcaConfig()
    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    return config


def load_geometry(path: Optional[str], fallback: BandGeometry = REFERENCE_GEOMETRY) -> BandGeometry:
    return record_io.load_model(path, BandGeometry) if path else fallback


def locate_estimates(estimates: list[DelayEstimate], prototypes: PrototypeSet) -> list[dict]:
    located = []
    for e in estimates:
        loc = grnn_locate(e.delay_seconds, prototypes)
        located.append(
            {
                "source_index": e.source_index,
                "delay_samples": e.delay_samples,
                "delay_s": e.delay_seconds,
                "confidence": e.confidence,
                "coordinate_m": loc.coordinate_m,
                "flags": list(e.flags) + list(loc.flags),
            }
        )
    return located


# ---------------------------------------------------------------- pipeline


def _match_nearest(entries: list[dict], truth: list[float]) -> None:
    for entry in entries:
        errors = [abs(entry["coordinate_m"] - y) for y in truth]
        best = min(range(len(truth)), key=lambda k: errors[k])
        entry["matched_source"] = best
        entry["error_mm"] = errors[best] * 1000


def _match_permutation(entries: list[dict], truth: list[float]) -> None:
    """Pair recovered columns with true sources by the permutation of least total error."""
    best = min(
        itertools.permutations(range(len(truth))),
        key=lambda p: sum(abs(e["coordinate_m"] - truth[k]) for e, k in zip(entries, p)),
    )
    for entry, k in zip(entries, best):
        entry["matched_source"] = k
        entry["error_mm"] = abs(entry["coordinate_m"] - truth[k]) * 1000


def _stage(name: str, timings: dict, fn: Callable, *args, **kwargs):
    start = time.perf_counter()
    try:
        result = fn(*args, **kwargs)
    except Exception as e:
        logger.error(f"[✗] Stage '{name}' failed: {e}")
        raise PipelineStageError(name, e) from e
    timings[name] = round(time.perf_counter() - start, 4)
    logger.info(f"[✓] {name} done in {timings[name]:.2f}s")
    return result


def _single_source(scenario: ScenarioSpec, j: int) -> ScenarioSpec:
    sources = [s.model_copy(update={"active": k == j}) for k, s in enumerate(scenario.sources)]
    return scenario.model_copy(update={"sources": sources})


def run_pipeline(
    scenario: ScenarioSpec,
    config: IcaConfig,
    with_timings: bool = False,
    progress: bool = False,
    out_dir: Optional[str] = None,
) -> dict:
    """
    The three experiments on one synthetic scenario:

    ccf_single  each source active alone, located from the CCF delay
    ccf         both sources active, one CCF location
    ica         both sources active, one location per separated mixing column
    """
    g = scenario.geometry
    fs = g.sample_rate_hz
    max_delay = max_admissible_delay_samples(g)
    prototypes = build_prototypes(g, scenario.prototype_spacing_m, scenario.sigma_s)
    timings: dict[str, float] = {}

    syn: Synthesis = _stage("synth", timings, synthesize, scenario)
    truth = list(syn.truth.true_positions)
    active = [j for j, s in enumerate(scenario.sources) if s.active]

    def _ccf_single():
        entries = []
        for j in active:
            single = synthesize(_single_source(scenario, j))
            entry = locate_estimates([delay_from_ccf(single.record, max_delay)], prototypes)[0]
            entry["source_index"] = j
            entries.append(entry)
        return entries

    ccf_single = _stage("ccf_single", timings, _ccf_single)
    ccf = _stage(
        "ccf", timings, lambda: locate_estimates([delay_from_ccf(syn.record, max_delay)], prototypes)
    )
    ica = _stage("separate", timings, run_ica, syn.record, config, progress)
    estimates = _stage(
        "locate", timings, delays_from_mixing, ica.mixing_time, sample_rate=fs, max_delay_samples=max_delay
    )
    ica_entries = locate_estimates(estimates, prototypes)

    for entry in ccf_single:
        entry["matched_source"] = entry["source_index"]
        entry["error_mm"] = abs(entry["coordinate_m"] - truth[entry["source_index"]]) * 1000
    _match_nearest(ccf, truth)
    _match_permutation(ica_entries, truth)

    sir = separation_sir_db(ica.unmixing.bins, filters_to_spectral(syn.mixing, config.fft_size))
    report = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "config": config.model_dump(),
        "geometry": g.model_dump(),
        "truth": record_io.truth_to_dict(syn.truth, fs),
        "methods": {"ccf_single": ccf_single, "ccf": ccf, "ica": ica_entries},
        "separation": {
            "passes_used": ica.passes_used,
            "converged": ica.converged,
            "final_update_norm": ica.final_update_norm,
            "permutation_changes": ica.permutation_changes,
            "sir_db": [float(s) for s in sir],
        },
    }
    if with_timings:
        report["timings_s"] = timings

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        record_io.write_filter_matrix(ica.mixing_time, os.path.join(out_dir, "mixing.json"))
        record_io.write_filter_matrix(ica.unmixing_time, os.path.join(out_dir, "unmixing.json"))
        record_io.write_convergence(ica.convergence, os.path.join(out_dir, "convergence.csv"))
        record_io.write_correlations(
            correlation_matrix(remove_mean_record(syn.record), max_delay), out_dir
        )
        record_io.write_json(report, os.path.join(out_dir, "report.json"))
    return report


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> dict:
    scenario = load_scenario(args.scenario, args.seed)
    syn = synthesize(scenario)
    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    fs = scenario.geometry.sample_rate_hz

    record_path = os.path.join(out_dir, "record.json")
    truth_path = os.path.join(out_dir, "truth.json")
    mixing_path = os.path.join(out_dir, "mixing_true.json")
    record_io.write_record(syn.record, record_path)
    record_io.write_json(record_io.truth_to_dict(syn.truth, fs), truth_path)
    record_io.write_filter_matrix(syn.mixing, mixing_path)
    logger.info(f"[✓] Record written to {record_path}")
    return {"record": record_path, "truth_file": truth_path, "mixing": mixing_path, "truth": record_io.truth_to_dict(syn.truth, fs)}


def cmd_ccf(args) -> dict:
    record = record_io.read_record_any(args.record, args.sample_rate)
    g = load_geometry(args.geometry)
    max_lag = args.max_lag or max_admissible_delay_samples(g)
    estimate = delay_from_ccf(record, max_lag)
    prototypes = build_prototypes(g, args.prototypes_spacing or DEFAULT_PROTOTYPE_SPACING_M, args.sigma)

    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    lag = min(max_lag, record.length - 1)
    return {
        "estimate": record_io.estimate_to_dict(estimate),
        "location": record_io.location_to_dict(grnn_locate(estimate.delay_seconds, prototypes)),
        "correlations": record_io.write_correlations(correlation_matrix(remove_mean_record(record), lag), out_dir),
    }


def cmd_separate(args) -> dict:
    record = record_io.read_record_any(args.record, args.sample_rate)
    config = load_ica_config(args.config, args.seed)
    result = run_ica(record, config, progress=args.progress)

    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    files = {
        "unmixing": os.path.join(out_dir, "unmixing.json"),
        "mixing": os.path.join(out_dir, "mixing.json"),
        "sources": os.path.join(out_dir, "sources_estimated.json"),
        "convergence": os.path.join(out_dir, "convergence.csv"),
    }
    record_io.write_filter_matrix(result.unmixing_time, files["unmixing"])
    record_io.write_filter_matrix(result.mixing_time, files["mixing"])
    record_io.write_record(result.sources_estimated, files["sources"])
    record_io.write_convergence(result.convergence, files["convergence"])
    return {
        "passes_used": result.passes_used,
        "converged": result.converged,
        "final_update_norm": result.final_update_norm,
        "permutation_changes": result.permutation_changes,
        "files": files,
    }


def cmd_locate(args) -> dict:
    if bool(args.filters) == bool(args.delays):
        raise ParameterError("Give exactly one of --filters or --delays.")
    g = load_geometry(args.geometry)
    prototypes = build_prototypes(g, args.prototypes_spacing or DEFAULT_PROTOTYPE_SPACING_M, args.sigma)
    if args.filters:
        mixing = record_io.read_filter_matrix(args.filters)
        estimates = delays_from_mixing(
            mixing, sample_rate=g.sample_rate_hz, max_delay_samples=max_admissible_delay_samples(g)
        )
    else:
        estimates = record_io.read_estimates(args.delays)
    return {"locations": locate_estimates(estimates, prototypes)}


def cmd_pipeline(args) -> dict:
    scenario = load_scenario(args.scenario, args.seed)
    config = load_ica_config(args.config, args.seed, fallback=scenario.ica)
    if args.prototypes_spacing:
        scenario = scenario.model_copy(update={"prototype_spacing_m": args.prototypes_spacing})
    if args.sigma:
        scenario = scenario.model_copy(update={"sigma_s": args.sigma})
    return run_pipeline(scenario, config, args.with_timings, args.progress, args.out_dir)


# ---------------------------------------------------------------- entry point


def _format_validation(e: ValidationError) -> str:
    lines = []
    for err in e.errors():
        where = ".".join(str(part) for part in err["loc"]) or "<document>"
        lines.append(f"  {where}: {err['msg']}")
    return f"Invalid {e.title}:\n" + "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Separate and locate continuous acoustic-emission sources.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *flags):
        if "record" in flags:
            p.add_argument("--record", type=str, required=True, help="Record header JSON or CSV (one column per channel).")
            p.add_argument("--sample-rate", "--sample_rate", dest="sample_rate", type=float, help="Sample rate for CSV records (Hz).")
        if "scenario" in flags:
            p.add_argument("--scenario", type=str, required=True, help="Scenario JSON (e.g., scenarios/paper-scenario.json).")
        if "geometry" in flags:
            p.add_argument("--geometry", type=str, help="Band geometry JSON (default: the 2.4 m reference band).")
        if "prototypes" in flags:
            p.add_argument("--prototypes-spacing", "--prototypes_spacing", dest="prototypes_spacing", type=float, help="Prototype spacing in meters (default: 0.1).")
            p.add_argument("--sigma", type=float, help="GRNN kernel width in seconds (default: median prototype delay gap).")
        if "config" in flags:
            p.add_argument("--config", type=str, help="ICA config JSON.")
            p.add_argument("--progress", action="store_true", help="Show a progress bar over ICA passes.")
        if "seed" in flags:
            p.add_argument("--seed", type=int, help="Overrides the seed of the scenario or config.")
        p.add_argument("--out-dir", "--out_dir", dest="out_dir", type=str, help="Directory for output files.")

    p = sub.add_parser("synth", help="Synthesize a record and its ground truth.")
    common(p, "scenario", "seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ccf", help="Delay of the strongest source from the cross-correlation.")
    common(p, "record", "geometry", "prototypes")
    p.add_argument("--max-lag", "--max_lag", dest="max_lag", type=int, help="Largest lag searched (default: admissible delay).")
    p.set_defaults(func=cmd_ccf)

    p = sub.add_parser("separate", help="Frequency-domain ICA of a record.")
    common(p, "record", "config", "seed")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("locate", help="Locate sources from mixing filters or delay estimates.")
    common(p, "geometry", "prototypes")
    p.add_argument("--filters", type=str, help="Mixing FilterMatrix JSON.")
    p.add_argument("--delays", type=str, help="Delay estimates JSON array.")
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("pipeline", help="Run the CCF and ICA experiments on a scenario.")
    common(p, "scenario", "config", "seed", "prototypes")
    p.add_argument("--with-timings", "--with_timings", dest="with_timings", action="store_true", help="Add stage timings to the report.")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        payload = args.func(args)
    except ValidationError as e:
        logger.error(f"[✗] {_format_validation(e)}")
        return EXIT_INPUT
    except (FileNotFoundError, IsADirectoryError) as e:
        logger.error(f"[✗] File not found: {e.filename}")
        return EXIT_INPUT
    except json.JSONDecodeError as e:
        logger.error(f"[✗] Invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
        return EXIT_INPUT
    except AebssError as e:
        cause = e.cause if isinstance(e, PipelineStageError) else e
        if isinstance(cause, ValidationError):
            logger.error(f"[✗] {_format_validation(cause)}")
            return EXIT_INPUT
        logger.error(f"[✗] {e}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"[✗] Unexpected failure: {e}")
        return EXIT_FAILURE

    print(record_io.dumps(payload))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
