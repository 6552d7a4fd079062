"""Command-line interface.

Commands
--------
impute        Impute a censored covariate in a CSV file.
simulate      Run one Monte Carlo scenario and print the bias table.
recruit       Impute, fit both progression models and rank trial candidates.
extend-study  Compare tail extensions (and interpolation modes) on a scenario.

Every output table is comma-delimited and starts with a ``# manifest:`` line
holding the effective settings as JSON. Settings come from the defaults, then
an optional ``--config`` JSON file, then the command-line flags.

Exit codes: 0 success, 2 bad input or flags, 3 model error, 4 every
simulation replicate failed.
"""

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .cox import CensoredData
from .errors import CensCovError, ScenarioFailed
from .imputation import ImputationConfig, impute_dataset
from .simulation import SCENARIOS, run_scenario, scenario

EXIT_OK, EXIT_INPUT, EXIT_MODEL, EXIT_SCENARIO = 0, 2, 3, 4

DEFAULTS = {
    "impute": {
        "input": None, "output": None, "approach": "extrapolated", "extension": "weibull",
        "interpolation": "carry-forward", "upper_cap": None,
    },
    "simulate": {
        "output": None, "scenario": "weibull-light-n500", "replicates": 200, "seed": 2024,
        "extension": "weibull", "interpolation": "carry-forward", "workers": 1,
    },
    "recruit": {
        "input": None, "output": None, "agreement": None, "synthetic": False, "seed": 2024,
        "trial_size": 200, "horizon": 2.0, "upper_cap": 60.0, "extension": "weibull",
        "interpolation": "carry-forward", "approach": "extrapolated", "resamples": 0,
    },
    "extend-study": {
        "output": None, "scenario": "weibull-extraheavy-n500", "replicates": 200,
        "seed": 2024, "interpolation": "carry-forward", "workers": 1,
    },
}

APPROACHES = ("extrapolated", "non-extrapolated")
EXTENSIONS = ("weibull", "exponential", "drop-off", "carry-forward")
INTERPOLATIONS = ("carry-forward", "mean")


class InputError(Exception):
    """Malformed input file or configuration (exit code 2)."""


def _key(value):
    return value.replace("-", "_")


def fmt(value):
    """Shortest round-trippable text for a cell."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_table(path, manifest, header, rows, footer=()):
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    for line in footer:
        buf.write(f"# {line}\n")
    text = buf.getvalue()
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _manifest(command, settings):
    return {"command": command, "version": __version__, "settings": settings}


# ---------------------------------------------------------------- reading input

def read_csv_rows(path):
    """Header and data rows (with their 1-based file line numbers), skipping
    ``#`` comment lines."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}")
    with fh:
        lines = [(i + 1, line) for i, line in enumerate(fh)
                 if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise InputError(f"{path}: missing header line")
    parsed = list(csv.reader([line for _, line in lines]))
    header = [h.strip() for h in parsed[0]]
    rows = []
    for (lineno, _), row in zip(lines[1:], parsed[1:]):
        if len(row) != len(header):
            raise InputError(f"{path}, line {lineno}: expected {len(header)} fields, "
                             f"found {len(row)}")
        rows.append((lineno, [c.strip() for c in row]))
    return header, rows


def _number(text, column, lineno, path):
    try:
        value = float(text)
    except ValueError:
        value = math.nan
    if not math.isfinite(value):
        raise InputError(f"{path}, line {lineno}: column {column!r} has invalid value {text!r}")
    return value


def read_censored_csv(path):
    """Parse the ``y, w, delta, z_1..z_p`` layout used by ``impute``."""
    header, rows = read_csv_rows(path)
    for col in ("y", "w", "delta"):
        if col not in header:
            raise InputError(f"{path}: missing required column {col!r}")
    zcols = sorted((h for h in header if h.startswith("z_")),
                   key=lambda h: int(h[2:]) if h[2:].isdigit() else h)
    idx = {h: header.index(h) for h in header}
    y, w, delta, z = [], [], [], []
    for lineno, row in rows:
        y.append(_number(row[idx["y"]], "y", lineno, path))
        wv = _number(row[idx["w"]], "w", lineno, path)
        if wv < 0:
            raise InputError(f"{path}, line {lineno}: w must be non-negative")
        w.append(wv)
        d = row[idx["delta"]]
        if d not in ("0", "1"):
            raise InputError(f"{path}, line {lineno}: delta must be 0 or 1, got {d!r}")
        delta.append(int(d))
        z.append([_number(row[idx[c]], c, lineno, path) for c in zcols])
    n = len(rows)
    data = CensoredData(np.array(y), np.array(w), np.array(delta, dtype=np.int8),
                        np.array(z, dtype=float).reshape(n, len(zcols)))
    return header, rows, data


VISIT_COLUMNS = ("subject_id", "first_visit_date", "last_visit_date", "diagnosis_date",
                 "age", "cag", "cuhdrs_start", "cuhdrs_end")


def read_visits_csv(path):
    """One row per subject with the columns in ``VISIT_COLUMNS``; an empty
    ``diagnosis_date`` means undiagnosed at the last visit."""
    from .recruitment import SubjectVisits

    header, rows = read_csv_rows(path)
    for col in VISIT_COLUMNS:
        if col not in header:
            raise InputError(f"{path}: missing required column {col!r}")
    idx = {h: header.index(h) for h in header}
    visits = []
    for lineno, row in rows:
        get = lambda c: row[idx[c]]  # noqa: E731
        try:
            cag = _number(get("cag"), "cag", lineno, path)
            if cag != int(cag):
                raise InputError(f"{path}, line {lineno}: cag must be an integer")
            visits.append(SubjectVisits(
                subject_id=get("subject_id"),
                first_visit_date=get("first_visit_date"),
                last_visit_date=get("last_visit_date"),
                diagnosis_date=get("diagnosis_date") or None,
                age_at_first_visit=_number(get("age"), "age", lineno, path),
                cag=int(cag),
                cuhdrs_start=_number(get("cuhdrs_start"), "cuhdrs_start", lineno, path),
                cuhdrs_end=_number(get("cuhdrs_end"), "cuhdrs_end", lineno, path),
            ))
        except ValueError as exc:
            raise InputError(f"{path}, line {lineno}: {exc}")
    return visits


def write_visits_csv(path, visits):
    rows = [(v.subject_id, v.first_visit_date.isoformat(), v.last_visit_date.isoformat(),
             v.diagnosis_date.isoformat() if v.diagnosis_date else "",
             v.age_at_first_visit, v.cag, v.cuhdrs_start, v.cuhdrs_end) for v in visits]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(VISIT_COLUMNS)
        for r in rows:
            writer.writerow([fmt(v) for v in r])


# ---------------------------------------------------------------- commands

def cmd_impute(s):
    if not s["input"]:
        raise InputError("impute needs --input")
    header, rows, data = read_censored_csv(s["input"])
    extra = ["imputed", "conditional_mean", "survival_at_w", "extension_fallback"]
    manifest = _manifest("impute", s)
    if data.n == 0:
        print("warning: input has no data rows; nothing to impute", file=sys.stderr)
        _write_table(s["output"], manifest, header + extra, [])
        return EXIT_OK
    config = ImputationConfig(
        approach=_key(s["approach"]), extension_kind=_key(s["extension"]),
        interpolation=_key(s["interpolation"]), upper_cap=s["upper_cap"])
    result = impute_dataset(data, config)
    diag = result.diagnostics
    wcol = header.index("w")
    out = []
    for i, (_, row) in enumerate(rows):
        row = list(row)
        if diag.imputed[i]:
            row[wcol] = fmt(float(result.data.w[i]))
        out.append(row + [bool(diag.imputed[i]), float(diag.conditional_mean[i]),
                          float(diag.survival_at_w[i]), bool(diag.used_fallback_extension[i])])
    footer = [f"{i + 1}: {e}" for i, e in enumerate(diag.errors) if e]
    _write_table(s["output"], manifest, header + extra, out,
                 [f"record_error {line}" for line in footer])
    return EXIT_OK


def _scenario_config(s, **extra):
    if s["scenario"] not in SCENARIOS:
        raise InputError(f"unknown scenario {s['scenario']!r}; known: "
                         + ", ".join(sorted(SCENARIOS)))
    if s["replicates"] < 1:
        raise InputError("--replicates must be at least 1")
    return scenario(s["scenario"], replicates=int(s["replicates"]), seed=int(s["seed"]),
                    interpolation=_key(s["interpolation"]), **extra)


SUMMARY_HEADER = ["parameter", "method", "bias", "percent_bias", "se",
                  "relative_efficiency", "n_used"]


def _summary_rows(summary, prefix=()):
    return [tuple(prefix) + (r.parameter, r.method, r.bias, r.percent_bias, r.se,
                             r.relative_efficiency, r.n_used) for r in summary.rows]


def cmd_simulate(s):
    config = _scenario_config(s, extension_kind=_key(s["extension"]))
    summary = run_scenario(config, workers=s["workers"])
    footer = [
        f"extension_convergence_rate: {fmt(summary.extension_convergence_rate)}",
        f"censoring_observed: {fmt(summary.censor_rate_observed)}",
        f"replicates: {summary.n_replicates}",
        "failed: " + ", ".join(f"{k}={v}" for k, v in sorted(summary.n_failed.items())),
    ]
    _write_table(s["output"], _manifest("simulate", s), SUMMARY_HEADER,
                 _summary_rows(summary), footer)
    return EXIT_OK


def cmd_extend_study(s):
    rows, footer = [], []
    for kind in ("drop_off", "exponential", "weibull"):
        config = _scenario_config(s, extension_kind=kind)
        summary = run_scenario(config, workers=s["workers"])
        rows += _summary_rows(summary, (kind.replace("_", "-"), s["interpolation"]))
        footer.append(f"{kind.replace('_', '-')} extension_convergence_rate: "
                      f"{fmt(summary.extension_convergence_rate)}")
    _write_table(s["output"], _manifest("extend-study", s),
                 ["extension", "interpolation"] + SUMMARY_HEADER, rows, footer)
    return EXIT_OK


def cmd_recruit(s):
    from .recruitment import bootstrap_agreement, compare_models, synthetic_cohort

    if s["synthetic"]:
        visits, _ = synthetic_cohort(seed=int(s["seed"]))
    elif s["input"]:
        visits = read_visits_csv(s["input"])
    else:
        raise InputError("recruit needs --input or --synthetic")
    if s["trial_size"] < 0:
        raise InputError("--trial-size must be non-negative")
    if not s["horizon"] > 0:
        raise InputError("--horizon must be positive")
    result = compare_models(visits, trial_size=int(s["trial_size"]), horizon=float(s["horizon"]),
                            upper_cap=s["upper_cap"], extension_kind=_key(s["extension"]),
                            interpolation=_key(s["interpolation"]))
    manifest = _manifest("recruit", s)
    chosen = result.lists[_key(s["approach"])]
    rows = [(r.rank, r.subject_id, r.predicted_end, r.delta_hat, r.rank <= chosen.trial_size)
            for r in chosen.ranked]
    _write_table(s["output"], manifest,
                 ["rank", "subject_id", "predicted_end", "delta_hat", "recruited"], rows)
    if s["agreement"]:
        ag = result.agreement
        arows = [("observed", ag.agree_recruit, ag.agree_not, ag.only_a, ag.only_b, ag.total)]
        if s["resamples"]:
            boot = bootstrap_agreement(
                result.fits["extrapolated"], result.fits["non_extrapolated"],
                result.imputed["extrapolated"], result.imputed["non_extrapolated"],
                n_resamples=int(s["resamples"]), trial_size=int(s["trial_size"]),
                horizon=float(s["horizon"]), seed=int(s["seed"]))
            m = boot.mean
            arows.append(("bootstrap_mean", m.agree_recruit, m.agree_not, m.only_a, m.only_b,
                          m.total))
        _write_table(s["agreement"], manifest,
                     ["scope", "agree_recruit", "agree_not", "only_extrapolated",
                      "only_non_extrapolated", "total"], arows)
    return EXIT_OK


COMMANDS = {"impute": cmd_impute, "simulate": cmd_simulate, "recruit": cmd_recruit,
            "extend-study": cmd_extend_study}


# ---------------------------------------------------------------- argument parsing

def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="censcov", description="Conditional mean imputation of right-censored covariates.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *names):
        sup = argparse.SUPPRESS
        p.add_argument("--config", help="JSON file of settings (flags take precedence)")
        p.add_argument("--output", default=sup, help="output CSV (default: stdout)")
        if "input" in names:
            p.add_argument("--input", default=sup, help="input CSV")
        if "approach" in names:
            p.add_argument("--approach", choices=APPROACHES, default=sup)
        if "extension" in names:
            p.add_argument("--extension", choices=EXTENSIONS, default=sup)
        if "interpolation" in names:
            p.add_argument("--interpolation", choices=INTERPOLATIONS, default=sup)
        if "upper_cap" in names:
            p.add_argument("--upper-cap", type=_positive_float, default=sup, metavar="YEARS")
        if "seed" in names:
            p.add_argument("--seed", type=int, default=sup)
        if "scenario" in names:
            p.add_argument("--scenario", default=sup, help="e.g. weibull-extraheavy-n500")
            p.add_argument("--replicates", type=int, default=sup)
            p.add_argument("--workers", type=int, default=sup, help="worker processes")
        return p

    common(sub.add_parser("impute", help="impute a censored covariate column"),
           "input", "approach", "extension", "interpolation", "upper_cap")
    common(sub.add_parser("simulate", help="run a Monte Carlo scenario"),
           "scenario", "seed", "extension", "interpolation")
    rec = common(sub.add_parser("recruit", help="rank-based trial recruitment"),
                 "input", "approach", "extension", "interpolation", "upper_cap", "seed")
    rec.add_argument("--synthetic", action="store_true", default=argparse.SUPPRESS,
                     help="use the built-in synthetic 970-subject cohort")
    rec.add_argument("--trial-size", type=int, default=argparse.SUPPRESS, metavar="N")
    rec.add_argument("--horizon", type=float, default=argparse.SUPPRESS, metavar="YEARS")
    rec.add_argument("--agreement", default=argparse.SUPPRESS, metavar="PATH",
                     help="write the two-model agreement counts here")
    rec.add_argument("--resamples", type=int, default=argparse.SUPPRESS,
                     help="bootstrap resamples for the agreement summary")
    common(sub.add_parser("extend-study", help="compare tail extensions on a scenario"),
           "scenario", "seed", "interpolation")
    return parser


def resolve_settings(command, flags, config_path=None):
    """Merge defaults, the JSON config file and explicit flags (in that order)."""
    settings = dict(DEFAULTS[command])
    if config_path:
        try:
            with open(config_path) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot open config {config_path}: {exc.strerror}")
        except json.JSONDecodeError as exc:
            raise InputError(f"{config_path}, line {exc.lineno}: invalid JSON ({exc.msg})")
        if not isinstance(loaded, dict):
            raise InputError(f"{config_path}: expected a JSON object")
        for key, value in loaded.items():
            k = key.replace("-", "_")
            if k not in settings:
                raise InputError(f"{config_path}: unknown setting {key!r} for {command}")
            settings[k] = value
    settings.update({k: v for k, v in flags.items() if k in settings})
    return settings


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = vars(args)
    command = flags.pop("command")
    config_path = flags.pop("config", None)
    try:
        settings = resolve_settings(command, flags, config_path)
        return COMMANDS[command](settings)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ScenarioFailed as exc:
        print(f"error: scenario failed: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except CensCovError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ValueError, TypeError) as exc:
        # invalid values reaching the model layer (e.g. from a config file)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
