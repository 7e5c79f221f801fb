"""Command-line surface: fit, test, select-alpha, power-study.

All commands are deterministic for a fixed input file, flags, and seed;
reports embed a fingerprint of the standardization and slicing so that a
fit and a test run on the same configuration can be matched up. Exit codes:
0 success, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .candidates import (
    estimate_cdrs,
    mzz_matrix,
    phd_matrix,
    save_matrix,
    simr_matrix,
    sir_matrix,
)
from .data import (
    Dataset,
    intraslice_moments,
    load_dataset_csv,
    slice_by_response,
    standardize,
)
from .exceptions import DataError, NumericalError
from .inference import InferenceWorkspace, dimension_test_sequence
from .selection import (
    DEFAULT_ALPHA_GRID,
    select_alpha_bootstrap,
    select_alpha_pvalue_from_parts,
)
from .simulation import StudyConfig, run_power_study, sir_dimension_test_sequence

OZONE_COLUMNS = ("Ozone", "Height", "Humidity", "ITemp", "STemp")


def validate_ozone_schema(column_names) -> None:
    """Check that a file exposes the expected ozone-study columns."""
    missing = [c for c in OZONE_COLUMNS if c not in column_names]
    if missing:
        raise DataError(
            f"ozone schema check failed; missing column(s): {missing} "
            f"(expected {list(OZONE_COLUMNS)})"
        )


def _fingerprint(sd, sa, extra: dict) -> str:
    """Hash of the standardized matrix, slicing, and run configuration."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(sd.z).tobytes())
    h.update(np.ascontiguousarray(sa.labels).tobytes())
    h.update(json.dumps(extra, sort_keys=True).encode())
    return h.hexdigest()


def _sig4(value: float) -> str:
    return f"{value:.4g}"


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def _parse_transforms(items) -> dict[str, float]:
    transforms: dict[str, float] = {}
    for item in items or []:
        if "=" not in item:
            raise DataError(f"--transform expects col=exponent, got {item!r}")
        name, _, raw = item.partition("=")
        try:
            transforms[name.strip()] = float(raw)
        except ValueError:
            raise DataError(f"--transform exponent not numeric: {item!r}") from None
    return transforms


def _load(args) -> Dataset:
    predictors = list(args.predictors) if args.predictors else None
    return load_dataset_csv(
        args.input,
        response=args.response,
        predictors=predictors,
        transforms=_parse_transforms(getattr(args, "transform", None)),
    )


def _parse_method(method: str, alpha_flag):
    """Map a method token (sir, save, mzz, phd-y, phd-r, simr, simr:0.2) to a builder."""
    token = method.lower()
    if token.startswith("simr"):
        if ":" in token:
            alpha = float(token.split(":", 1)[1])
        elif alpha_flag is not None:
            alpha = float(alpha_flag)
        else:
            alpha = 0.6
        return f"simr:{alpha:g}", ("simr", alpha)
    if token in ("sir", "save", "mzz", "phd-y", "phd-r"):
        return token, (token, None)
    raise DataError(f"unknown method {method!r}")


def cmd_fit(args) -> int:
    data = _load(args)
    sd = standardize(data)
    sa = slice_by_response(data.y, args.slices)
    sm = intraslice_moments(sd, sa)

    methods = args.method or ["simr"]
    report_methods = {}
    for requested in methods:
        label, (kind, alpha) = _parse_method(requested, args.alpha)
        if kind == "simr":
            cm = simr_matrix(sm, alpha)
        elif kind == "sir":
            cm = sir_matrix(sm)
        elif kind == "mzz":
            cm = mzz_matrix(sm)
        elif kind == "save":
            cm = save_matrix(sm)
        else:
            cm = phd_matrix(sd, data.y, mode="y" if kind == "phd-y" else "residual")
        d = args.directions or data.p
        cdrs = estimate_cdrs(cm, d, sd)
        block = cm.to_json_dict()
        block["eigenvectors_z"] = block.pop("eigenvectors")
        block["directions_x"] = cdrs.in_x_scale.T.tolist()
        report_methods[label] = block
        print(f"{label}: eigenvalues " + " ".join(_sig4(v) for v in cm.eigenvalues))

    payload = {
        "command": "fit",
        "input": Path(args.input).name,
        "response": args.response,
        "n": data.n,
        "p": data.p,
        "slices": args.slices,
        "fingerprint": _fingerprint(sd, sa, {"slices": args.slices, "response": args.response}),
        "methods": report_methods,
    }
    if args.out:
        _write_json(args.out, payload)
    return 0


def cmd_test(args) -> int:
    data = _load(args)
    sd = standardize(data)
    sa = slice_by_response(data.y, args.slices)
    sm = intraslice_moments(sd, sa)

    method = (args.method[0] if args.method else "simr").lower()
    if method.startswith("simr"):
        _, (_, alpha) = _parse_method(method, args.alpha)
        ws = InferenceWorkspace.from_dataset(data, sd, sa)
        results, d_hat = dimension_test_sequence(
            sm, ws, sd, alpha, args.level,
            mc_reps=args.mc_reps, mc_seed=args.seed,
        )
        rows = [r.to_json_dict() for r in results]
        label = f"simr:{alpha:g}"
    elif method == "sir":
        results, d_hat = sir_dimension_test_sequence(sm, data.n, args.level)
        rows = results
        label = "sir"
    else:
        raise DataError(f"test supports methods simr and sir, got {method!r}")

    for row in rows:
        print(
            f"{label} d<={row['d']}: stat {_sig4(row['lambda'])}  "
            f"p {_sig4(row.get('p_satterthwaite', row.get('p', float('nan'))))}"
        )
    print(f"{label}: inferred dimension {d_hat}")

    payload = {
        "command": "test",
        "input": Path(args.input).name,
        "response": args.response,
        "method": label,
        "n": data.n,
        "p": data.p,
        "slices": args.slices,
        "level": args.level,
        "fingerprint": _fingerprint(sd, sa, {"slices": args.slices, "response": args.response}),
        "results": rows,
        "d_hat": d_hat,
    }
    if args.out:
        _write_json(args.out, payload)
    return 0


def _parse_grid(raw) -> tuple[float, ...]:
    if raw is None:
        return DEFAULT_ALPHA_GRID
    return tuple(float(v) for v in raw.split(","))


def cmd_select_alpha(args) -> int:
    data = _load(args)
    grid = _parse_grid(args.alpha_grid)

    if args.criterion == "pvalue":
        sd = standardize(data)
        sa = slice_by_response(data.y, args.slices)
        sm = intraslice_moments(sd, sa)
        ws = InferenceWorkspace.from_dataset(data, sd, sa)
        report = select_alpha_pvalue_from_parts(sm, ws, sd, grid, args.level)
    else:
        report = select_alpha_bootstrap(
            data,
            args.slices,
            grid,
            d_fixed=args.d_fixed,
            reps=args.boot_reps,
            seed=args.seed,
        )

    print(f"criterion {report.criterion}: selected alpha {_sig4(report.selected_alpha)}")
    if report.selected_d is not None:
        print(f"inferred dimension {report.selected_d}")

    if args.out:
        _write_json(args.out, report.to_json_dict())
    if args.curve_out:
        lines = ["alpha,d,value"]
        for alpha, d, value in report.curve_rows():
            lines.append(f"{alpha!r},{d},{value!r}")
        Path(args.curve_out).write_text("\n".join(lines) + "\n")
    return 0


def cmd_power_study(args) -> int:
    cfg = StudyConfig.from_json_file(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    table = run_power_study(cfg)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "power_table.json", table.to_json_dict())
    (out_dir / "power_table.csv").write_text(table.to_csv_text())
    (out_dir / "power_table.txt").write_text(table.render_text())
    print(table.render_text())
    print(f"seed {cfg.seed}; outputs in {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simr",
        description=(
            "Sufficient dimension reduction with sliced inverse moment "
            "regression and weighted chi-squared dimension tests"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_flags(p):
        p.add_argument("--input", required=True, help="CSV file with a header row")
        p.add_argument("--response", required=True, help="response column name")
        p.add_argument("--predictors", nargs="+", help="predictor columns (default: all others)")
        p.add_argument(
            "--transform", action="append", metavar="COL=EXP",
            help="power transform applied to a predictor before standardization",
        )
        p.add_argument("--slices", type=int, default=10, help="number of response slices")
        p.add_argument("--out", help="write a JSON report here")

    p_fit = sub.add_parser("fit", help="estimate candidate matrices and bases")
    add_data_flags(p_fit)
    p_fit.add_argument(
        "--method", action="append",
        help="sir, save, mzz, phd-y, phd-r, simr, or simr:ALPHA (repeatable)",
    )
    p_fit.add_argument("--alpha", type=float, help="mixing weight for simr")
    p_fit.add_argument("--directions", type=int, help="basis size to report (default p)")
    p_fit.set_defaults(func=cmd_fit)

    p_test = sub.add_parser("test", help="run the marginal dimension tests")
    add_data_flags(p_test)
    p_test.add_argument("--method", action="append", help="simr (default) or sir")
    p_test.add_argument("--alpha", type=float, default=0.6, help="mixing weight for simr")
    p_test.add_argument("--level", type=float, default=0.05)
    p_test.add_argument("--mc-reps", type=int, help="add Monte Carlo p-values with this many draws")
    p_test.add_argument("--seed", type=int, default=0)
    p_test.set_defaults(func=cmd_test)

    p_sel = sub.add_parser("select-alpha", help="choose the mixing weight from data")
    add_data_flags(p_sel)
    p_sel.add_argument("--criterion", choices=["pvalue", "bootstrap"], default="pvalue")
    p_sel.add_argument("--alpha-grid", help="comma-separated grid (default: built-in)")
    p_sel.add_argument("--level", type=float, default=0.05)
    p_sel.add_argument("--d-fixed", type=int, default=1, help="basis size for the bootstrap criterion")
    p_sel.add_argument("--boot-reps", type=int, default=100)
    p_sel.add_argument("--seed", type=int, default=0)
    p_sel.add_argument("--curve-out", help="write the criterion curve as tidy CSV")
    p_sel.set_defaults(func=cmd_select_alpha)

    p_study = sub.add_parser("power-study", help="run a simulation study from a config file")
    p_study.add_argument("--config", required=True, help="study config JSON")
    p_study.add_argument("--out-dir", required=True)
    p_study.add_argument("--seed", type=int, help="override the config seed")
    p_study.set_defaults(func=cmd_power_study)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
