"""Command-line pipeline: collect judgments, estimate rates, write reports.

Subcommands:
  collect      run a collection plan against a provider (mock or HTTP)
  estimate     fit error rates to a record log or matrix CSV
  scalability  tabulate P(correct Copeland score) over ranks and set sizes
  bt           strength-model eps search or fixed-eps ranking
  report       cross-run summary table, with rank correlations

Every command is deterministic given --seed; wall-clock timestamps appear
only in the .meta.json sidecar written next to each artifact (judgment
records keep their own collection timestamp as data). Exit codes: 0 ok,
2 usage, 3 input error, 4 provider/auth failure, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import sys
from pathlib import Path

import numpy as np

from . import btmodel, copeland, estimator, harness, prefcore, probmodel
from .errors import (
    AuthError,
    DegenerateStrengths,
    NetworkError,
    NonPositiveInit,
    PairerrError,
    RateLimited,
    SupportMismatch,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_PROVIDER = 4
EXIT_NUMERICAL = 5


def _write_meta(artifact: Path, command: str, seed: int, extra: dict | None = None) -> None:
    meta = {
        "schema_version": 1,
        "command": command,
        "seed": seed,
        "argv": sys.argv[1:],
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    if extra:
        meta.update(extra)
    sidecar = artifact.with_name(artifact.name + ".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_records(path: Path, n_flag: int | None) -> tuple[list, int]:
    records = prefcore.read_records(path)
    if not records:
        raise ValueError(f"no records in {path}")
    inferred = 1 + max(max(r.first_index, r.second_index) for r in records)
    n = n_flag if n_flag is not None else inferred
    if n < inferred:
        raise ValueError(f"--n {n} is smaller than the largest text index ({inferred - 1})")
    return records, n


def cmd_collect(args: argparse.Namespace) -> int:
    plan = harness.load_plan(args.plan)
    if args.provider is not None:
        plan = dataclasses.replace(
            plan, provider=dataclasses.replace(plan.provider, endpoint=args.provider)
        )
    if args.seed is not None:
        plan = dataclasses.replace(plan, rng_seed=args.seed)
    args.seed = plan.rng_seed
    log_path = Path(args.log)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with harness.RecordLog(log_path) as sink:
        summary = harness.run_comparisons(plan, sink, concurrency=args.threads)
    _write_meta(log_path, "collect", plan.rng_seed, {"summary": summary.to_dict()})
    print(json.dumps(summary.to_dict()))
    if summary.parse_failures:
        print(
            f"warning: {len(summary.parse_failures)} judgments never parsed and were not recorded",
            file=sys.stderr,
        )
    return EXIT_OK


def _fit_config(args: argparse.Namespace, mode: str) -> estimator.FitConfig:
    if args.paper_exact:
        base = estimator.FitConfig(rng_seed=args.seed)
    elif args.desk_scale or mode == estimator.POSITIONAL:
        base = estimator.FitConfig.desk_scale(rng_seed=args.seed)
    else:
        base = estimator.FitConfig(rng_seed=args.seed)
    overrides: dict = {}
    for flag, field in (
        ("grid_lo", "grid_lo"),
        ("grid_hi", "grid_hi"),
        ("grid_step", "grid_step"),
        ("replicates", "synth_replicates"),
        ("runs", "curve_runs"),
        ("stride", "n_stride"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    if overrides:
        base = dataclasses.replace(base, **overrides)
    return base


def cmd_estimate(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    input_path = Path(args.input)
    cfg = _fit_config(args, args.mode)

    if args.mode == estimator.UNIFORM:
        if input_path.suffix.lower() == ".csv":
            _ids, arr = prefcore.read_matrix_csv(input_path)
            z = prefcore.z_from_array(arr)
        else:
            records, n = _load_records(input_path, args.n)
            y = prefcore.build_y(records, n, trial_filter=0)
            z = prefcore.build_z(y)
        est = estimator.estimate_uniform(z, cfg, threads=args.threads)
        emp = estimator.empirical_curve(z, cfg)
        syn = estimator.synthetic_curve(z.n, est)
        headline = f"best_eps={est.best_eps}"
    else:
        if input_path.suffix.lower() == ".csv":
            raise ValueError("positional mode needs a record log; a matrix CSV has no trial structure")
        if args.k_plus is None or args.k_minus is None:
            raise ValueError("positional mode requires --k-plus and --k-minus")
        records, n = _load_records(input_path, args.n)
        rep = probmodel.RepeatSpec(args.k_plus, args.k_minus)
        est = estimator.estimate_positional(records, n, rep, cfg, threads=args.threads)
        w = prefcore.build_w(records, n, rep.k_plus, rep.k_minus)
        emp = estimator.empirical_curve(w, cfg, rep)
        syn = estimator.synthetic_curve(n, est)
        headline = f"best_eps_plus={est.best_eps_plus} best_eps_minus={est.best_eps_minus}"

    est_path = out / "estimate.json"
    _write_json(est_path, est.to_dict())
    surface_path = out / "surface.csv"
    estimator.write_surface_csv(surface_path, est)
    curves_path = out / "curves.csv"
    copeland.write_curves_csv(curves_path, [emp, syn])
    _write_meta(est_path, "estimate", args.seed)
    print(headline)
    for path in (est_path, surface_path, curves_path):
        print(f"wrote {path}")
    return EXIT_OK


def _parse_m_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def cmd_scalability(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    rep = probmodel.RepeatSpec(args.k_plus, args.k_minus)
    specs: list[probmodel.ErrorSpec] = []
    for eps in args.eps or []:
        specs.append(probmodel.ErrorSpec.uniform(eps))
    for pair in args.eps_pair or []:
        plus_text, minus_text = pair.split(",")
        specs.append(probmodel.ErrorSpec.positional(float(plus_text), float(minus_text)))
    if not specs:
        specs = [probmodel.ErrorSpec.uniform(e / 10) for e in range(1, 6)]
    m_values = _parse_m_list(args.m_list)
    tables = []
    for spec in specs:
        n_values = None
        if args.n_min is not None or args.n_max != 60:
            n_values = list(range(args.n_min or 2, args.n_max + 1))
        tables.append(probmodel.scalability_table(spec, rep, m_values, n_values))

    if args.format == "json":
        path = out / "scalability.json"
        rows = []
        for table in tables:
            for m, n, p in table.rows:
                rows.append(
                    {
                        "m": m,
                        "n": n,
                        "probability": p,
                        "kind": table.spec.kind,
                        "eps": table.spec.eps,
                        "eps_plus": table.spec.eps_plus,
                        "eps_minus": table.spec.eps_minus,
                        "k_plus": table.rep.k_plus,
                        "k_minus": table.rep.k_minus,
                    }
                )
        rows.sort(key=lambda r: (r["m"], r["n"]))
        _write_json(path, {"schema_version": 1, "rows": rows})
    else:
        path = out / "scalability.csv"
        probmodel.write_scalability_csv(path, tables)
    _write_meta(path, "scalability", args.seed)
    for table in tables:
        drops = sum(table.strict_decrease.values())
        print(f"{table.spec.label()}: strictly decreasing for {drops}/{len(table.strict_decrease)} ranks")
    print(f"wrote {path}")
    return EXIT_OK


def _load_x(input_path: Path, n_flag: int | None) -> prefcore.StrengthMatrixX:
    if input_path.suffix.lower() == ".csv":
        _ids, arr = prefcore.read_matrix_csv(input_path)
        counts = np.rint(arr).astype(np.int64)
        if not np.allclose(arr, counts) or (counts < 0).any():
            raise ValueError("a strength matrix must hold nonnegative integer win counts")
        return prefcore.StrengthMatrixX(n=counts.shape[0], counts=counts)
    records, n = _load_records(input_path, n_flag)
    return prefcore.build_x(records, n)


def cmd_bt(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    x = _load_x(Path(args.input), args.n)
    if args.eps is not None:
        ranking = btmodel.bt_rank_with_eps(
            x, args.eps, seeds=args.seeds, max_iters=args.max_iters, rng_seed=args.seed
        )
        path = out / "bt_ranking.json"
        _write_json(path, ranking.to_dict())
        _write_meta(path, "bt", args.seed)
        print(f"ranking at eps={args.eps}: {list(ranking.ranking)}")
        print(f"wrote {path}")
        return EXIT_OK
    result = btmodel.bt_eps_search(
        x,
        objective=args.objective,
        seeds=args.seeds,
        grid_step=args.grid_step,
        max_iters=args.max_iters,
        rng_seed=args.seed,
    )
    hist_path = out / "bt_histogram.csv"
    btmodel.write_histogram_csv(hist_path, result)
    seeds_path = out / "bt_seeds.csv"
    btmodel.write_seed_table_csv(seeds_path, result)
    spreads_path = out / "bt_spreads.csv"
    btmodel.write_spreads_csv(spreads_path, result)
    lo, hi = result.modal_bin()
    summary_path = out / "bt_search.json"
    _write_json(
        summary_path,
        {
            "schema_version": 1,
            "objective": result.objective,
            "seeds": result.seeds,
            "grid_step": args.grid_step,
            "modal_bin": [lo, hi],
            "modal_bin_count": int(result.bin_counts.max()),
        },
    )
    _write_meta(summary_path, "bt", args.seed)
    print(f"modal eps_opt bin: [{lo:g}, {hi:g}) with {int(result.bin_counts.max())} of {result.seeds} seeds")
    for path in (hist_path, seeds_path, spreads_path, summary_path):
        print(f"wrote {path}")
    return EXIT_OK


def _copeland_ranking(z: prefcore.ConsensusMatrixZ) -> list[int]:
    scores = copeland.copeland_scores(z).values
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    return [int(i) for i in order]


def cmd_report(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    estimates = [Path(p) for p in args.estimate or []]
    logs = [Path(p) for p in args.log or []]
    count = max(len(estimates), len(logs))
    if count == 0:
        raise ValueError("report needs at least one --estimate or --log")
    labels = list(args.label or [])
    rows: list[dict] = []
    rankings: list[tuple[str, list[int]]] = []
    for idx in range(count):
        est_path = estimates[idx] if idx < len(estimates) else None
        log_path = logs[idx] if idx < len(logs) else None
        if idx < len(labels):
            label = labels[idx]
        elif est_path is not None:
            label = est_path.stem
        else:
            label = log_path.stem
        eps = eps_plus = eps_minus = None
        if est_path is not None:
            est = estimator.ErrorEstimate.from_dict(json.loads(est_path.read_text(encoding="utf-8")))
            eps, eps_plus, eps_minus = est.best_eps, est.best_eps_plus, est.best_eps_minus
        s_com = None
        if log_path is not None:
            records, n = _load_records(log_path, None)
            y = prefcore.build_y(records, n, trial_filter=0)
            s_com = prefcore.commutativity_score(y)
            rankings.append((label, _copeland_ranking(prefcore.build_z(y))))
        ratio = None
        if s_com is not None and eps is not None and eps > 0:
            ratio = s_com / eps
        rows.append(
            {
                "label": label,
                "s_com": s_com,
                "eps": eps,
                "eps_plus": eps_plus,
                "eps_minus": eps_minus,
                "s_com_over_eps": ratio,
            }
        )

    csv_path = out / "summary.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# schema_version=1\n")
        fh.write("label,s_com,eps,eps_plus,eps_minus,s_com_over_eps\n")
        for row in rows:
            cells = [row["label"]]
            for key in ("s_com", "eps", "eps_plus", "eps_minus", "s_com_over_eps"):
                value = row[key]
                cells.append("" if value is None else repr(float(value)))
            fh.write(",".join(cells) + "\n")
    json_path = out / "summary.json"
    _write_json(json_path, {"schema_version": 1, "rows": rows})
    written = [csv_path, json_path]

    if len(rankings) >= 2:
        spearman_path = out / "spearman.csv"
        with open(spearman_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("# schema_version=1\n")
            fh.write("label," + ",".join(label for label, _ in rankings) + "\n")
            for label_a, rank_a in rankings:
                values = [
                    repr(float(copeland.spearman_rho(rank_a, rank_b))) for _, rank_b in rankings
                ]
                fh.write(label_a + "," + ",".join(values) + "\n")
        written.append(spearman_path)

    _write_meta(csv_path, "report", args.seed)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # default None so collect can distinguish "not given" from an explicit 0
    # and fall back to the plan's seed; main() resolves None to 0 elsewhere
    common.add_argument("--seed", type=int, default=None, help="master RNG seed (default 0)")
    common.add_argument("--threads", type=int, default=4, help="worker threads (default 4)")
    common.add_argument("--out-dir", default=".", help="directory for output artifacts (default .)")
    common.add_argument(
        "--format", choices=("csv", "json"), default="csv", help="table output format (default csv)"
    )

    parser = argparse.ArgumentParser(
        prog="pairerr",
        description="Estimate pairwise-judgment error rates without ground truth.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_collect = sub.add_parser(
        "collect", parents=[common], help="run a collection plan against a provider"
    )
    p_collect.add_argument("plan", help="JSON run plan")
    p_collect.add_argument("--log", required=True, help="output NDJSON record log (appended)")
    p_collect.add_argument(
        "--provider", default=None, help="override the plan's endpoint (e.g. mock:eps=0.1)"
    )
    p_collect.set_defaults(func=cmd_collect)

    p_est = sub.add_parser(
        "estimate", parents=[common], help="fit error rates to a record log or matrix CSV"
    )
    p_est.add_argument("input", help="NDJSON record log, or matrix CSV for uniform mode")
    p_est.add_argument(
        "--mode", choices=(estimator.UNIFORM, estimator.POSITIONAL), default=estimator.UNIFORM
    )
    p_est.add_argument("--n", type=int, default=None, help="number of texts (inferred if omitted)")
    p_est.add_argument("--k-plus", type=int, default=None, help="trials with the pair in index order")
    p_est.add_argument("--k-minus", type=int, default=None, help="trials with the pair reversed")
    p_est.add_argument("--grid-lo", type=float, default=None)
    p_est.add_argument("--grid-hi", type=float, default=None)
    p_est.add_argument("--grid-step", type=float, default=None)
    p_est.add_argument("--replicates", type=int, default=None, help="synthetic matrices per grid point")
    p_est.add_argument("--runs", type=int, default=None, help="random subsets per curve point")
    p_est.add_argument("--stride", type=int, default=None, help="sample every stride-th n")
    p_est.add_argument(
        "--paper-exact",
        action="store_true",
        help="full-accuracy settings: step 0.005, 10 replicates, 200 runs, stride 1",
    )
    p_est.add_argument(
        "--desk-scale",
        action="store_true",
        help="fast settings: step 0.01, 3 replicates, 50 runs, stride 5",
    )
    p_est.set_defaults(func=cmd_estimate)

    p_scal = sub.add_parser(
        "scalability", parents=[common], help="tabulate P(correct Copeland score) over (m, n)"
    )
    p_scal.add_argument("--eps", type=float, action="append", help="uniform rate (repeatable)")
    p_scal.add_argument(
        "--eps-pair", action="append", help="positional rates as 'plus,minus' (repeatable)"
    )
    p_scal.add_argument("--k-plus", type=int, default=1)
    p_scal.add_argument("--k-minus", type=int, default=1)
    p_scal.add_argument("--m-list", default="1,2,3,4,5,6,7,8", help="ranks, comma separated")
    p_scal.add_argument("--n-min", type=int, default=None, help="smallest set size (default m+1)")
    p_scal.add_argument("--n-max", type=int, default=60, help="largest set size (default 60)")
    p_scal.set_defaults(func=cmd_scalability)

    p_bt = sub.add_parser(
        "bt", parents=[common], help="strength-model eps search or fixed-eps ranking"
    )
    p_bt.add_argument("input", help="NDJSON record log or win-count matrix CSV")
    p_bt.add_argument("--n", type=int, default=None, help="number of texts (records input only)")
    p_bt.add_argument(
        "--objective",
        choices=(btmodel.MIN_SPREAD, btmodel.MAX_SPREAD),
        default=btmodel.MIN_SPREAD,
    )
    p_bt.add_argument("--eps", type=float, default=None, help="skip the search; rank at this eps")
    p_bt.add_argument("--seeds", type=int, default=200, help="random initializations (default 200)")
    p_bt.add_argument("--grid-step", type=float, default=0.005, help="eps grid step (default 0.005)")
    p_bt.add_argument("--max-iters", type=int, default=500)
    p_bt.set_defaults(func=cmd_bt)

    p_rep = sub.add_parser(
        "report", parents=[common], help="summary table across runs, with rank correlations"
    )
    p_rep.add_argument("--estimate", action="append", help="estimate JSON (repeatable)")
    p_rep.add_argument("--log", action="append", help="record log paired with the estimate (repeatable)")
    p_rep.add_argument("--label", action="append", help="row label (repeatable, default: file stem)")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and args.command != "collect":
        args.seed = 0
    try:
        return args.func(args)
    except (AuthError, RateLimited, NetworkError) as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (DegenerateStrengths, NonPositiveInit, SupportMismatch) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PairerrError, FileNotFoundError, IsADirectoryError, ValueError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
