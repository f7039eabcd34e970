"""Command-line entry points: train, convergence, compare, mesh.

Every run writes its outputs under ``--out`` together with a manifest
recording the package version, the resolved configuration and its hash.
Outputs are deterministic given the configuration and seeds; nothing
time- or machine-dependent lands in the CSV files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, SolverError, TrainingDivergenceError
from .geometry import build_mesh_family, write_mesh
from .navem_solver import conformity_defect, navem_errors, solve_adr
from .problems import available_problems, get_problem
from .trainer import TrainingConfig, load_model, save_model, train
from .vem_core import local_matrices, solve_poisson_vem, vem_errors

EXIT_CONFIG_ERROR = 2
EXIT_TRAINING_DIVERGENCE = 3
EXIT_SOLVER_FAILURE = 4

FAMILIES = ("cartesian", "sine-distorted")


def _fmt(value) -> str:
    """Shortest round-trip float formatting for CSV cells."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_manifest(out_dir: Path, subcommand: str, options: dict):
    canonical = json.dumps(options, sort_keys=True, separators=(",", ":"))
    manifest = {
        "tool": "navem",
        "version": __version__,
        "subcommand": subcommand,
        "options": options,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n"
    )


def _read_config_file(path: str) -> dict:
    """Key-value configuration: one ``key = value`` pair per line, ``#``
    comments; keys use the long-option names with ``-`` or ``_``."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config_file(args, parser_defaults: dict):
    """Fill arguments from ``--config`` for flags the user did not set."""
    if not getattr(args, "config", None):
        return args
    values = _read_config_file(args.config)
    unknown = set(values) - set(parser_defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, raw in values.items():
        if getattr(args, key) != parser_defaults[key]:
            continue  # explicit flag wins
        default = parser_defaults[key]
        if isinstance(default, bool):
            setattr(args, key, raw.lower() in ("1", "true", "yes"))
        elif isinstance(default, int) and not isinstance(default, bool):
            setattr(args, key, int(raw))
        elif isinstance(default, float):
            setattr(args, key, float(raw))
        else:
            setattr(args, key, raw)
    return args


def _parse_refinements(text: str):
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad refinement list {text!r}") from exc
    if not values or any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("refinement list must be strictly increasing")
    return values


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _incremental_rates(hs, errors):
    rates = [float("nan")]
    for k in range(1, len(errors)):
        rates.append(
            float(np.log(errors[k - 1] / errors[k]) / np.log(hs[k - 1] / hs[k]))
        )
    return rates


def _fitted_rate(hs, errors, window: int = 3):
    if len(hs) < 2:
        return float("nan")
    tail = min(window, len(hs))
    slope, _ = np.polyfit(np.log(hs[-tail:]), np.log(errors[-tail:]), 1)
    return float(slope)


def cmd_train(args) -> int:
    out = _out_dir(args)
    hidden = tuple(int(t) for t in args.hidden.split(",") if t.strip())
    config = TrainingConfig(
        n_vertices=args.nv,
        degree=args.ell,
        hidden_layers=hidden,
        sample_count=args.samples,
        points_per_edge=args.points_per_edge,
        dataset_seed=args.seed,
        init_seed=args.seed,
        adam_epochs=args.epochs_adam,
        bfgs_max_iter=args.bfgs_iters,
        validation_seed=args.seed + 10_000,
    )
    model = train(config, log=lambda msg: print(msg, flush=True))
    model_path = out / args.model_name
    save_model(model, model_path)
    curve = model.metadata["training_curve"]
    _write_csv(out / "training_curve.csv", ["phase", "iteration", "loss"], curve)
    _write_manifest(out, "train", config.to_dict())
    validation = model.metadata["validation"]
    print(f"model written to {model_path}")
    print(
        f"final loss {model.metadata['final_loss']:.6e}; held-out boundary "
        f"error max {validation['value_error_max']:.3e} mean "
        f"{validation['value_error_mean']:.3e}"
    )
    return 0


def _export_solution(out: Path, tag: str, mesh, dofs, element_bases):
    rows = [
        (i, float(x), float(y), float(u))
        for i, ((x, y), u) in enumerate(zip(mesh.vertices, dofs))
    ]
    _write_csv(out / f"solution_{tag}.csv", ["vertex_id", "x", "y", "u"], rows)
    field_rows = []
    for e in range(mesh.n_elements):
        poly = mesh.element_polygon(e)
        pts = np.vstack([poly.vertices, poly.centroid])
        values = element_bases[e].values(pts) @ dofs[mesh.elements[e]]
        for (x, y), u in zip(pts, values):
            field_rows.append((e, float(x), float(y), float(u)))
    _write_csv(
        out / f"field_{tag}.csv", ["element_id", "x", "y", "u"], field_rows
    )


def _gnuplot_script(out: Path, csv_name: str, columns: dict):
    lines = [
        "set logscale xy",
        "set xlabel 'h'",
        "set ylabel 'error'",
        "set datafile separator ','",
        "set key left top",
        "plot \\",
    ]
    plots = [
        f"  '{csv_name}' using {hcol}:{ecol} with linespoints title '{label}'"
        for label, (hcol, ecol) in columns.items()
    ]
    lines[-1] += "\n" + ", \\\n".join(plots)
    (out / "errors.gp").write_text("\n".join(lines) + "\n")


def cmd_convergence(args) -> int:
    out = _out_dir(args)
    refinements = _parse_refinements(args.refinements)
    model = load_model(args.model)
    problem = get_problem(args.problem)
    rows = []
    hs, e2s, e1s = [], [], []
    for n in refinements:
        mesh = build_mesh_family(args.family, n)
        dofs, bases = solve_adr(mesh, model, problem, args.quad_degree)
        err2, err1 = navem_errors(
            mesh,
            dofs,
            model,
            problem.exact,
            problem.exact_gradient,
            args.quad_degree,
            element_bases=bases,
        )
        defect = conformity_defect(mesh, dofs, bases)
        hs.append(mesh.h)
        e2s.append(err2)
        e1s.append(err1)
        rows.append([args.family, n, mesh.h, mesh.n_vertices, err2, err1, defect])
        print(
            f"{args.family} n={n}: h={mesh.h:.4f} err2={err2:.6e} "
            f"err1={err1:.6e} conformity={defect:.3e}",
            flush=True,
        )
        if args.export_solution:
            _export_solution(out, f"{args.family}_{n}", mesh, dofs, bases)
    rate2 = _incremental_rates(hs, e2s)
    rate1 = _incremental_rates(hs, e1s)
    table = [
        row[:5] + [rate2[k]] + [row[5]] + [rate1[k]] + [row[6]]
        for k, row in enumerate(rows)
    ]
    csv_name = f"errors_{args.family}_{args.problem}.csv"
    _write_csv(
        out / csv_name,
        ["family", "n", "h", "dofs", "err2", "rate2", "err1", "rate1", "conformity"],
        table,
    )
    fitted2, fitted1 = _fitted_rate(hs, e2s), _fitted_rate(hs, e1s)
    summary = (
        f"family {args.family} problem {args.problem}\n"
        f"least-squares rates over the last {min(3, len(hs))} refinements: "
        f"rate(err2) = {fitted2!r}, rate(err1) = {fitted1!r}\n"
    )
    (out / f"rates_{args.family}_{args.problem}.txt").write_text(summary)
    _gnuplot_script(out, csv_name, {"err2": (3, 5), "err1": (3, 7)})
    _write_manifest(
        out,
        "convergence",
        {
            "model": str(args.model),
            "family": args.family,
            "refinements": refinements,
            "problem": args.problem,
            "quad_degree": args.quad_degree,
        },
    )
    print(summary, end="")
    return 0


def cmd_compare(args) -> int:
    out = _out_dir(args)
    refinements = _parse_refinements(args.refinements)
    model = load_model(args.model)
    problem = get_problem(args.problem)
    if not problem.is_poisson:
        raise ConfigError(
            "compare runs the Poisson baseline; pick a poisson-* problem"
        )
    rows = []
    hs, navem2, navem1, vem2_list, vem1_list = [], [], [], [], []
    for n in refinements:
        mesh = build_mesh_family(args.family, n)
        dofs, bases = solve_adr(mesh, model, problem, args.quad_degree)
        ne2, ne1 = navem_errors(
            mesh,
            dofs,
            model,
            problem.exact,
            problem.exact_gradient,
            args.quad_degree,
            element_bases=bases,
        )
        defect = conformity_defect(mesh, dofs, bases)
        vem_dofs = solve_poisson_vem(
            mesh, problem.source, problem.dirichlet, args.quad_degree
        )
        ve2, ve1 = vem_errors(
            mesh, vem_dofs, problem.exact, problem.exact_gradient, args.quad_degree
        )
        hs.append(mesh.h)
        navem2.append(ne2)
        navem1.append(ne1)
        vem2_list.append(ve2)
        vem1_list.append(ve1)
        rows.append(
            [
                args.family,
                n,
                mesh.h,
                ne2,
                ne1,
                ve2,
                ve1,
                ne2 / ve2,
                ne1 / ve1,
                defect,
            ]
        )
        print(
            f"{args.family} n={n}: navem ({ne2:.4e}, {ne1:.4e})  "
            f"vem ({ve2:.4e}, {ve1:.4e})",
            flush=True,
        )
    _write_csv(
        out / f"compare_{args.family}.csv",
        [
            "family",
            "n",
            "h",
            "navem_err2",
            "navem_err1",
            "vem_err2",
            "vem_err1",
            "ratio2",
            "ratio1",
            "navem_conformity",
        ],
        rows,
    )
    summary = (
        f"family {args.family} problem {args.problem}\n"
        f"NAVEM rates: err2 {_fitted_rate(hs, navem2)!r} "
        f"err1 {_fitted_rate(hs, navem1)!r}\n"
        f"VEM   rates: err2 {_fitted_rate(hs, vem2_list)!r} "
        f"err1 {_fitted_rate(hs, vem1_list)!r}\n"
    )
    (out / f"compare_rates_{args.family}.txt").write_text(summary)
    _write_manifest(
        out,
        "compare",
        {
            "model": str(args.model),
            "family": args.family,
            "refinements": refinements,
            "problem": args.problem,
            "quad_degree": args.quad_degree,
        },
    )
    print(summary, end="")
    return 0


def cmd_mesh(args) -> int:
    out = _out_dir(args)
    mesh = build_mesh_family(args.family, args.n)
    mesh.validate_conforming()
    path = out / f"mesh_{args.family}_{args.n}.txt"
    write_mesh(mesh, path)
    print(f"{mesh.n_elements} elements, {mesh.n_vertices} vertices -> {path}")
    if args.dump_local is not None:
        if not 0 <= args.dump_local < mesh.n_elements:
            raise ConfigError(f"element id {args.dump_local} out of range")
        local = local_matrices(mesh.element_polygon(args.dump_local), args.dump_local)
        np.set_printoptions(precision=12, linewidth=120)
        print(f"element {args.dump_local} projection coefficients:\n{local.coeffs}")
        print(f"consistency:\n{local.consistency}")
        print(f"stabilization:\n{local.stabilization}")
        print(f"stiffness:\n{local.stiffness}")
    _write_manifest(out, "mesh", {"family": args.family, "n": args.n})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="navem",
        description="Neural-approximated virtual element method toolkit",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_train = sub.add_parser("train", help="train a basis-coefficient network")
    p_train.add_argument("--config", default=None, help="key=value config file")
    p_train.add_argument("--nv", type=int, default=4, help="polygon vertex count")
    p_train.add_argument("--ell", type=int, default=5, help="harmonic degree")
    p_train.add_argument("--samples", type=int, default=100)
    p_train.add_argument("--points-per-edge", type=int, default=20)
    p_train.add_argument("--epochs-adam", type=int, default=3000)
    p_train.add_argument("--bfgs-iters", type=int, default=12000)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--hidden", default="30,30,30")
    p_train.add_argument("--model-name", default="model.json")
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=cmd_train)

    p_conv = sub.add_parser("convergence", help="NAVEM refinement study")
    p_conv.add_argument("--config", default=None)
    p_conv.add_argument("--model", required=True)
    p_conv.add_argument("--family", choices=FAMILIES, default="cartesian")
    p_conv.add_argument("--refinements", default="4,8,16,32")
    p_conv.add_argument(
        "--problem", choices=available_problems(), default="adr-paper"
    )
    p_conv.add_argument("--quad-degree", type=int, default=12)
    p_conv.add_argument("--export-solution", action="store_true")
    p_conv.add_argument("--out", required=True)
    p_conv.set_defaults(func=cmd_convergence)

    p_cmp = sub.add_parser("compare", help="NAVEM vs classical VEM on Poisson")
    p_cmp.add_argument("--config", default=None)
    p_cmp.add_argument("--model", required=True)
    p_cmp.add_argument("--family", choices=FAMILIES, default="cartesian")
    p_cmp.add_argument("--refinements", default="4,8,16,32")
    p_cmp.add_argument(
        "--problem",
        choices=[p for p in available_problems() if p.startswith("poisson")],
        default="poisson-manufactured",
    )
    p_cmp.add_argument("--quad-degree", type=int, default=12)
    p_cmp.add_argument("--out", required=True)
    p_cmp.set_defaults(func=cmd_compare)

    p_mesh = sub.add_parser("mesh", help="build and export a mesh family member")
    p_mesh.add_argument("--config", default=None)
    p_mesh.add_argument("--family", choices=FAMILIES, default="cartesian")
    p_mesh.add_argument("--n", type=int, default=4)
    p_mesh.add_argument("--dump-local", type=int, default=None, metavar="ELEM_ID")
    p_mesh.add_argument("--out", required=True)
    p_mesh.set_defaults(func=cmd_mesh)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    subparser_defaults = {
        key: value
        for key, value in vars(args).items()
        if key not in ("func", "subcommand", "config")
    }
    try:
        args = _apply_config_file(args, subparser_defaults)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except TrainingDivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_TRAINING_DIVERGENCE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE


if __name__ == "__main__":
    sys.exit(main())
