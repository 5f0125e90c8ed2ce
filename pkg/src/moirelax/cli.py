"""Batch front-end: config parsing, subcommands, file emission.

Subcommands: ``relax``, ``dwall``, ``sweep``, ``gsfe-map``.  Runs are
driven by a TOML config file; every physical quantity carries its unit in
the key name.  Exit codes: 0 success, 1 configuration error (the message
names the offending key), 2 relaxation hit the iteration limit, 3 sweep
rows failed.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                       # python < 3.11
    import tomli as tomllib

from . import analysis, io, plotting
from .domainwall import (WallSpec, asymptotic_check, characteristic_width,
                         fwhm_of_kink, solve_kink, solve_wall,
                         wall_energy_per_length, width_endpoints)
from .gsfe import (ElasticModuli, GsfeModel, quartic_potential,
                   sine_gordon_potential)
from .lattice import (DegenerateConfigurationError, StrainFamily,
                      graphene_basis, oblique_basis)
from .relax import (DisplacementField, LayerPair, RelaxOptions, auto_grid,
                    relax, resample_field)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_DEFAULTS = {
    "material": {
        "a0_angstrom": 1.42,
        "basis": "standard",
        "lambda_mev_per_cell_area": 37950.0,
        "mu_mev_per_cell_area": 47352.0,
        "gsfe_c0_mev_per_cell_area": 7.076,
        "gsfe_c1_mev_per_cell_area": 4.064,
        "gsfe_c2_mev_per_cell_area": -0.374,
        "gsfe_c3_mev_per_cell_area": -0.095,
    },
    "family": {
        "kind": "twist",
        "twist_degrees": 0.0,
        "twist_degrees_list": [],
        "epsilon": 0.0,
        "epsilon_list": [],
    },
    "solver": {
        "grid_n": 0,
        "grad_tol": 1e-6,
        "max_iter": 5000,
        "memory": 10,
        "warm_start": True,
    },
    "dwall": {
        "triplet": 1,
        "phi_rot_degrees": 0.0,
        "half_domain": 12.0,
        "samples": 4001,
        "test_potential": "",
    },
    "analysis": {
        "triplets": [1],
        "cut_samples": 1001,
        "cut_length_factor": 1.2,
        "projection": "fixed",
        "phase_sign": 1,
        "map_resolution": 256,
        "emit_map": False,
        "relaxed": True,
        "reference_fwhm_angstrom": 0.0,
        "benchmark_fwhm_angstrom": [],
        "benchmark_ratios": [],
    },
    "output": {
        "directory": "moirelax-out",
    },
}


def load_config(path: str | None) -> dict:
    """Parse and validate a config file, merging it over the defaults."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file is not valid TOML: {exc}")
    cfg = {}
    for section, defaults in _DEFAULTS.items():
        given = raw.pop(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{section}: must be a section (table)")
        merged = dict(defaults)
        for key, value in given.items():
            if key not in defaults:
                raise ConfigError(f"{section}.{key}: unknown key")
            merged[key] = value
        cfg[section] = merged
    if raw:
        raise ConfigError(f"{next(iter(raw))}: unknown section")
    _validate(cfg)
    return cfg


def _require(cond: bool, key: str, reason: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {reason}")


def _validate(cfg: dict) -> None:
    mat = cfg["material"]
    _require(isinstance(mat["a0_angstrom"], (int, float)) and mat["a0_angstrom"] > 0,
             "material.a0_angstrom", "must be a positive length")
    _require(mat["basis"] in ("standard", "oblique"),
             "material.basis", "must be 'standard' or 'oblique'")
    _require(mat["mu_mev_per_cell_area"] > 0,
             "material.mu_mev_per_cell_area", "shear modulus must be positive")
    _require(mat["lambda_mev_per_cell_area"] + mat["mu_mev_per_cell_area"] > 0,
             "material.lambda_mev_per_cell_area", "lambda + mu must be positive")

    fam = cfg["family"]
    _require(fam["kind"] in ("twist", "dilation", "pure_shear", "simple_shear"),
             "family.kind",
             "must be one of twist, dilation, pure_shear, simple_shear")
    for key in ("twist_degrees_list", "epsilon_list"):
        _require(isinstance(fam[key], list), f"family.{key}", "must be a list")

    sol = cfg["solver"]
    _require(sol["grid_n"] >= 0, "solver.grid_n", "must be >= 0 (0 = automatic)")
    _require(sol["grad_tol"] > 0, "solver.grad_tol", "must be positive")
    _require(sol["max_iter"] > 0, "solver.max_iter", "must be positive")
    _require(sol["memory"] > 0, "solver.memory", "must be positive")

    dw = cfg["dwall"]
    _require(dw["triplet"] in (1, 2, 3), "dwall.triplet", "must be 1, 2 or 3")
    _require(dw["half_domain"] > 0, "dwall.half_domain", "must be positive")
    _require(dw["samples"] >= 9, "dwall.samples", "must be at least 9")
    _require(dw["test_potential"] in ("", "quartic", "sine_gordon"),
             "dwall.test_potential", "must be '', 'quartic' or 'sine_gordon'")

    ana = cfg["analysis"]
    _require(all(t in (1, 2, 3) for t in ana["triplets"]) and ana["triplets"],
             "analysis.triplets", "must be a nonempty list drawn from {1, 2, 3}")
    _require(ana["cut_samples"] >= 16, "analysis.cut_samples", "must be at least 16")
    _require(ana["cut_length_factor"] > 1.0,
             "analysis.cut_length_factor", "must exceed 1 to reach the plateaus")
    _require(ana["projection"] in ("fixed", "local"),
             "analysis.projection", "must be 'fixed' or 'local'")
    _require(ana["phase_sign"] in (1, -1), "analysis.phase_sign", "must be +1 or -1")
    _require(ana["map_resolution"] >= 16, "analysis.map_resolution",
             "must be at least 16")


def _material_objects(cfg: dict):
    mat = cfg["material"]
    if mat["basis"] == "standard":
        basis = graphene_basis(mat["a0_angstrom"])
    else:
        basis = oblique_basis(np.sqrt(3.0) * mat["a0_angstrom"])
    model = GsfeModel(mat["gsfe_c0_mev_per_cell_area"],
                      mat["gsfe_c1_mev_per_cell_area"],
                      mat["gsfe_c2_mev_per_cell_area"],
                      mat["gsfe_c3_mev_per_cell_area"])
    moduli = ElasticModuli(mat["lambda_mev_per_cell_area"],
                           mat["mu_mev_per_cell_area"])
    return basis, model, moduli


def _family_for(cfg: dict, parameter: float) -> StrainFamily:
    basis, _, _ = _material_objects(cfg)
    kind = cfg["family"]["kind"]
    try:
        if kind == "twist":
            return StrainFamily.twist(np.deg2rad(parameter), basis)
        return StrainFamily(kind, parameter, basis)
    except (DegenerateConfigurationError, ValueError) as exc:
        key = "family.twist_degrees" if kind == "twist" else "family.epsilon"
        raise ConfigError(f"{key}: {exc}")


def _scalar_parameter(cfg: dict) -> float:
    fam = cfg["family"]
    if fam["kind"] == "twist":
        _require(fam["twist_degrees"] != 0.0, "family.twist_degrees",
                 "twist runs need a nonzero angle")
        return float(fam["twist_degrees"])
    _require(fam["epsilon"] != 0.0, "family.epsilon",
             "strain runs need a nonzero strain")
    return float(fam["epsilon"])


def _sweep_parameters(cfg: dict) -> list[float]:
    fam = cfg["family"]
    key = "twist_degrees_list" if fam["kind"] == "twist" else "epsilon_list"
    values = fam[key]
    _require(bool(values), f"family.{key}", "sweep list must not be empty")
    return [float(v) for v in values]


def _solver_options(cfg: dict, initial=None) -> RelaxOptions:
    sol = cfg["solver"]
    return RelaxOptions(grad_tol=sol["grad_tol"], max_iter=sol["max_iter"],
                        memory=sol["memory"], initial=initial)


def _relax_one(cfg: dict, parameter: float, grid_override: int = 0,
               initial=None, quiet: bool = False):
    basis, model, moduli = _material_objects(cfg)
    family = _family_for(cfg, parameter)
    pair = LayerPair.from_family(family, moduli)
    n = grid_override or auto_grid(pair, cfg["solver"]["grid_n"])
    result = relax(pair, model, n, _solver_options(cfg, initial))
    if not quiet:
        state = "converged" if result.converged else "NOT converged"
        print(f"[relax] {cfg['family']['kind']} parameter={parameter:g} N={n} "
              f"iters={result.iterations} {state} "
              f"E/cell={result.energy.total:.6g} meV force_sup={result.grad_sup:.3g}")
    return pair, result


def _emit_relax_outputs(cfg: dict, out_dir: str, pair, result, quiet: bool) -> None:
    io.ensure_dir(out_dir)
    io.write_field(os.path.join(out_dir, "field.bin"), result.field)
    e = result.energy
    io.write_csv(os.path.join(out_dir, "energy.csv"),
                 ["quantity", "mev_per_cell", "mev_per_angstrom2"],
                 [["intra_layer1", e.intra1, e.intra1_per_area],
                  ["intra_layer2", e.intra2, e.intra2_per_area],
                  ["inter_misfit", e.inter, e.inter_per_area],
                  ["total", e.total, e.total_per_area]])
    io.write_csv(os.path.join(out_dir, "trace.csv"),
                 ["iteration", "total_mev_per_cell", "force_sup_norm"],
                 result.trace)
    plotting.save_trace_figure(os.path.join(out_dir, "trace.png"), result.trace)
    ana = cfg["analysis"]
    if ana["emit_map"]:
        _, model, _ = _material_objects(cfg)
        gmap = analysis.gsfe_map(result.field, pair, model,
                                 resolution=ana["map_resolution"],
                                 phase_sign=ana["phase_sign"])
        lo, hi = io.write_ppm(os.path.join(out_dir, "map.ppm"), gmap.values)
        io.write_map_sidecar(os.path.join(out_dir, "map_meta.txt"),
                             gmap.cell_basis, lo, hi, gmap.resolution,
                             gmap.phase_sign)
        plotting.save_map_figure(os.path.join(out_dir, "map.png"), gmap)
    if not quiet:
        print(f"[relax] outputs written to {out_dir}")


def cmd_relax(cfg: dict, out_dir: str, grid_override: int, quiet: bool) -> int:
    parameter = _scalar_parameter(cfg)
    pair, result = _relax_one(cfg, parameter, grid_override, quiet=quiet)
    _emit_relax_outputs(cfg, out_dir, pair, result, quiet)
    return 0 if result.converged else 2


def cmd_dwall(cfg: dict, out_dir: str, quiet: bool) -> int:
    basis, model, moduli = _material_objects(cfg)
    dw = cfg["dwall"]
    io.ensure_dir(out_dir)

    if dw["test_potential"]:
        pot = (quartic_potential() if dw["test_potential"] == "quartic"
               else sine_gordon_potential())
        sol = solve_kink(pot, half_domain=dw["half_domain"], n=dw["samples"])
        if dw["test_potential"] == "quartic":
            exact = np.tanh(sol.t / 2.0)
            kappa_exact = 2.0
        else:
            exact = (4.0 * np.arctan(np.exp(sol.t)) - np.pi) / np.pi
            kappa_exact = 4.0 / np.pi
        sup_err = float(np.max(np.abs(sol.psi - exact)))
        io.write_csv(os.path.join(out_dir, "kink.csv"), ["t", "psi"],
                     zip(sol.t, sol.psi))
        io.write_csv(os.path.join(out_dir, "wall.csv"), ["quantity", "value"],
                     [["sup_error_vs_analytic", sup_err],
                      ["kappa", sol.kappa],
                      ["kappa_exact", kappa_exact],
                      ["bvp_residual_sup", sol.residual_sup]])
        plotting.save_kink_figure(os.path.join(out_dir, "kink.png"), sol,
                                  title=f"{dw['test_potential']} reference kink")
        if not quiet:
            print(f"[dwall] {dw['test_potential']} kink sup-error vs analytic: "
                  f"{sup_err:.3e}; kappa={sol.kappa:.8f}")
        return 0

    spec = WallSpec.build(dw["triplet"], np.deg2rad(dw["phi_rot_degrees"]),
                          basis, moduli, model)
    sol = solve_wall(spec, half_domain=dw["half_domain"], n=dw["samples"])
    l_perp, l_par = width_endpoints(spec)
    l_phi = characteristic_width(spec)
    kappa, defect = asymptotic_check(sol)
    dimless = fwhm_of_kink(sol)
    energy_per_len = wall_energy_per_length(spec, sol)
    rows = [
        ["shear_width_angstrom", l_perp],
        ["angle_width_angstrom", l_phi],
        ["tensile_width_angstrom", l_par],
        ["well_curvature_mev_per_cell_area", spec.potential.k_min],
        ["kappa", kappa],
        ["tail_defect_bound", defect],
        ["bvp_residual_sup", sol.residual_sup],
        ["kink_fwhm_dimensionless", dimless],
        ["kink_fwhm_shear_angstrom", dimless * l_perp],
        ["tanh_reference_fwhm_shear_angstrom", 2.0 * np.log(3.0) * l_perp],
        ["wall_energy_mev_per_cell_area_per_angstrom", energy_per_len],
    ]
    io.write_csv(os.path.join(out_dir, "wall.csv"), ["quantity", "value"], rows)
    io.write_csv(os.path.join(out_dir, "kink.csv"), ["t", "psi"],
                 zip(sol.t, sol.psi))
    plotting.save_kink_figure(os.path.join(out_dir, "kink.png"), sol,
                              title=f"wall family {dw['triplet']}")
    if not quiet:
        print(f"[dwall] family {dw['triplet']}: shear width {l_perp:.3f} A, "
              f"tensile width {l_par:.3f} A; "
              f"kink FWHM {dimless:.4f} x width "
              f"(tanh reference {2.0 * np.log(3.0):.4f})")
        print(f"[dwall] predicted shear-wall FWHM {dimless * l_perp:.2f} A "
              f"(tanh reference {2.0 * np.log(3.0) * l_perp:.2f} A)")
    return 0


def _sweep_row(cfg: dict, parameter: float, initial, quiet: bool):
    """One sweep row: coarse solve warm-started from the previous row, then
    a polish pass on the target grid (spectral prolongation in between)."""
    basis, model, moduli = _material_objects(cfg)
    pair = LayerPair.from_family(_family_for(cfg, parameter), moduli)
    n = auto_grid(pair, cfg["solver"]["grid_n"])
    if n > 64 and cfg["solver"]["warm_start"]:
        coarse_pair, coarse = _relax_one(cfg, parameter, grid_override=n // 2,
                                         initial=initial, quiet=quiet)
        pair, result = _relax_one(cfg, parameter, grid_override=n,
                                  initial=coarse.field, quiet=quiet)
        return pair, result, coarse.field
    pair, result = _relax_one(cfg, parameter, grid_override=n,
                              initial=initial, quiet=quiet)
    return pair, result, result.field


def _sweep_row_worker(args):
    cfg, parameter = args
    pair, result, _ = _sweep_row(cfg, parameter, None, True)
    return parameter, pair, result


def cmd_sweep(cfg: dict, out_dir: str, quiet: bool) -> int:
    basis, model, moduli = _material_objects(cfg)
    parameters = _sweep_parameters(cfg)
    ana = cfg["analysis"]
    kind = cfg["family"]["kind"]
    io.ensure_dir(out_dir)

    # relax larger parameters (smaller cells) first so warm starts chain
    order = sorted(parameters, reverse=True)
    walls = {t: WallSpec.build(t, 0.0, basis, moduli, model)
             for t in (1, 2, 3)}

    results: dict[float, tuple] = {}
    failures: list[tuple[float, str]] = []
    workers = int(os.environ.get("MOIRE_THREADS", "1") or "1")
    if workers > 1 and not cfg["solver"]["warm_start"]:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for parameter, pair, result in pool.map(
                    _sweep_row_worker, [(cfg, p) for p in order]):
                results[parameter] = (pair, result)
    else:
        previous = None
        for parameter in order:
            try:
                initial = previous if cfg["solver"]["warm_start"] else None
                pair, result, carry = _sweep_row(cfg, parameter, initial, quiet)
                results[parameter] = (pair, result)
                previous = carry
            except Exception as exc:   # record, keep sweeping
                failures.append((parameter, f"{type(exc).__name__}: {exc}"))

    profiles = []
    measured = []
    for parameter in order:
        if parameter not in results:
            continue
        pair, result = results[parameter]
        for t in ana["triplets"]:
            try:
                profile, res = analysis.measure_wall(
                    result.field, pair, walls[t], n_samples=ana["cut_samples"],
                    length_factor=ana["cut_length_factor"],
                    phase_sign=ana["phase_sign"], projection=ana["projection"])
            except Exception as exc:
                failures.append((parameter, f"wall {t}: {type(exc).__name__}: {exc}"))
                continue
            profiles.append((parameter, t, profile))
            measured.append((parameter, t, profile.angle, res.width))
            io.write_csv(os.path.join(
                out_dir, f"profile_{kind}_{parameter:g}_wall{t}.csv"),
                ["y_angstrom", "u"], zip(profile.y, profile.u))

    # ratio column: measured width over the narrowest-moire shear wall,
    # or over an explicitly configured reference width
    ref_width = float(ana["reference_fwhm_angstrom"]) or np.nan
    if not np.isfinite(ref_width):
        shear_rows = [m for m in measured
                      if analysis.classify_wall(m[2]) == "shear"]
        if kind == "twist" and shear_rows:
            smallest = min(m[0] for m in shear_rows)
            ref_width = next(m[3] for m in shear_rows if m[0] == smallest)
    rows = [analysis.WidthRow(
        family=kind, parameter=parameter,
        wall=f"{analysis.classify_wall(angle)}-{t}", angle=angle, fwhm=width,
        ratio=width / ref_width if np.isfinite(ref_width) else np.nan,
        theory_ratio=analysis.theory_width_ratio(angle, moduli))
        for parameter, t, angle, width in measured]

    io.write_csv(os.path.join(out_dir, "report.csv"),
                 ["family", "parameter", "wall", "theta0_plus_phi_rad",
                  "fwhm_angstrom", "ratio", "theory_ratio"],
                 [[r.family, r.parameter, r.wall, r.angle, r.fwhm, r.ratio,
                   r.theory_ratio] for r in rows])
    if rows:
        plotting.save_width_figure(os.path.join(out_dir, "widths.png"), rows,
                                   title=f"{kind} sweep")
        first_triplet = ana["triplets"][0]
        kink = solve_wall(walls[first_triplet])
        shear_w, _ = width_endpoints(walls[first_triplet])
        geo_angle = [p for p in profiles if p[1] == first_triplet]
        plotting.save_profile_figure(
            os.path.join(out_dir, "profiles.png"),
            [(f"{kind} {param:g}", prof) for param, _, prof in geo_angle],
            kink=kink,
            kink_width=characteristic_width(
                walls[first_triplet].with_normal_angle(
                    geo_angle[0][2].angle)) if geo_angle else shear_w,
            title=f"wall profiles, family {first_triplet}")
    if failures:
        io.write_csv(os.path.join(out_dir, "failures.csv"),
                     ["parameter", "error"], failures)
        if not quiet:
            for parameter, msg in failures:
                print(f"[sweep] FAILED parameter={parameter:g}: {msg}",
                      file=sys.stderr)
        return 3
    if not quiet:
        print(f"[sweep] {len(rows)} report rows written to {out_dir}")
    return 0


def cmd_gsfe_map(cfg: dict, out_dir: str, grid_override: int, quiet: bool,
                 field_path: str | None = None) -> int:
    basis, model, moduli = _material_objects(cfg)
    parameter = _scalar_parameter(cfg)
    ana = cfg["analysis"]
    io.ensure_dir(out_dir)
    family = _family_for(cfg, parameter)
    pair = LayerPair.from_family(family, moduli)
    exit_code = 0
    if field_path:
        n = grid_override or auto_grid(pair, cfg["solver"]["grid_n"])
        fld = io.field_from_file(field_path, pair.cell(n))
    elif ana["relaxed"]:
        pair, result = _relax_one(cfg, parameter, grid_override, quiet=quiet)
        fld = result.field
        exit_code = 0 if result.converged else 2
    else:
        n = grid_override or auto_grid(pair, cfg["solver"]["grid_n"])
        fld = DisplacementField.zero(pair.cell(n))
    gmap = analysis.gsfe_map(fld, pair, model, resolution=ana["map_resolution"],
                             phase_sign=ana["phase_sign"])
    lo, hi = io.write_ppm(os.path.join(out_dir, "map.ppm"), gmap.values)
    io.write_map_sidecar(os.path.join(out_dir, "map_meta.txt"), gmap.cell_basis,
                         lo, hi, gmap.resolution, gmap.phase_sign)
    plotting.save_map_figure(os.path.join(out_dir, "map.png"), gmap,
                             title=f"{cfg['family']['kind']} {parameter:g}")
    if not quiet:
        print(f"[gsfe-map] raster {gmap.resolution}x{gmap.resolution}, "
              f"range [{lo:.4g}, {hi:.4g}] meV/cell-area -> {out_dir}")
    return exit_code


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moirelax",
        description="Relaxation and wall analysis of bilayer moire patterns")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("relax", "relax one configuration and write field + energy files"),
            ("dwall", "solve the one-dimensional wall problem"),
            ("sweep", "relax a parameter sweep and tabulate wall widths"),
            ("gsfe-map", "emit the misfit-energy map of a configuration")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="TOML config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--grid", type=int, default=0,
                       help="override the relaxation grid size N")
        p.add_argument("--quiet", action="store_true")
        if name == "gsfe-map":
            p.add_argument("--field", default=None,
                           help="load a saved field.bin instead of relaxing")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out_dir = args.out or cfg["output"]["directory"]
        if args.command == "relax":
            return cmd_relax(cfg, out_dir, args.grid, args.quiet)
        if args.command == "dwall":
            return cmd_dwall(cfg, out_dir, args.quiet)
        if args.command == "sweep":
            return cmd_sweep(cfg, out_dir, args.quiet)
        return cmd_gsfe_map(cfg, out_dir, args.grid, args.quiet,
                            field_path=args.field)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
