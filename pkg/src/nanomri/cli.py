"""Command line front end.

Subcommands: field, scan, invert, analyze, oracle, time. Exit codes:
0 success, 2 input validation, 3 numerical failure, 4 file I/O.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _density(cfg):
    from .probe import calibrated_model, density_from_model, threshold_density
    model = calibrated_model(cfg.donor_depth_nm * 1e-9)
    return threshold_density(density_from_model(model))


def _load_cfg(args):
    from . import config as cfgmod
    if args.config:
        cfg = cfgmod.load_config(args.config)
    else:
        cfg = (cfgmod.extended_config() if args.mode == "extended"
               else cfgmod.sectional_config())
    return cfg


def _add_common(p):
    p.add_argument("--config", help="JSON run configuration file")
    p.add_argument("--mode", choices=["sectional", "extended"],
                   default="sectional", help="named default mode")


def cmd_field(args) -> int:
    from .constants import gyromagnetic
    from .probe import FieldOrientation, coupling_profile
    cfg = _load_cfg(args)
    density = _density(cfg)
    orient = FieldOrientation(math.radians(args.theta),
                              math.radians(args.phi))
    gamma_n = gyromagnetic(cfg.isotope).gamma
    prof = coupling_profile(density, orient, args.r_min * 1e-9,
                            args.r_max * 1e-9, args.samples, gamma_n)
    out = {"r_nm": (prof["r"] * 1e9).tolist(),
           "gamma_rad_s": prof["gamma"].tolist(),
           "gradient_rad_s_m": prof["gradient"].tolist(),
           "monotone": prof["monotone"]}
    json.dump(out, sys.stdout, indent=1)
    print()
    return EXIT_OK


def cmd_time(args) -> int:
    from .config import scan_geometry
    from .scan import build_scan, estimate_time
    from .signal_model import ShotNoiseModel
    cfg = _load_cfg(args)
    density = _density(cfg)
    plan = build_scan(scan_geometry(cfg), isotope=cfg.isotope)
    est = estimate_time(plan, density,
                        ShotNoiseModel(cfg.n_measure, cfg.t_measure_s),
                        rho_detect=cfg.rho_detect,
                        rho_control=cfg.rho_control,
                        coupling_scale=cfg.coupling_scale,
                        b_ac_surface=cfg.b_ac_surface_t,
                        t_control_cap=cfg.t_control_cap_s)
    json.dump(est.as_dict(), sys.stdout, indent=1)
    print()
    return EXIT_OK


def _read_targets(path, isotope):
    from .molecule import parse_structure, select_species
    with open(path) as fh:
        text = fh.read()
    fmt = "pdb" if path.lower().endswith(".pdb") else "auto"
    structure = parse_structure(text, fmt=fmt)
    return select_species(structure, isotope)


def cmd_scan(args) -> int:
    from .config import run_manifest, scan_geometry
    from .scan import build_scan, run_forward, save_manifest, save_records
    from .signal_model import CoherenceParams, ShotNoiseModel
    cfg = _load_cfg(args)
    density = _density(cfg)
    plan = build_scan(scan_geometry(cfg), isotope=cfg.isotope)
    targets = _read_targets(args.structure, cfg.isotope)
    if targets.shape[0] == 0:
        print(f"no {cfg.isotope} sites in {args.structure}",
              file=sys.stderr)
        return EXIT_VALIDATION
    noise = (None if args.no_noise
             else ShotNoiseModel(cfg.n_measure, cfg.t_measure_s))
    coh = CoherenceParams(probe_t2=cfg.probe_t2_s,
                          target_t_rho=cfg.target_t_rho_s)
    result = run_forward(plan, density, targets, coh, noise, seed=cfg.seed,
                         rho_detect=cfg.rho_detect,
                         rho_control=cfg.rho_control,
                         coupling_scale=cfg.coupling_scale,
                         b_ac_surface=cfg.b_ac_surface_t,
                         t_control_cap=cfg.t_control_cap_s)
    save_records(result.records, args.output)
    manifest_path = args.output + ".manifest.json"
    save_manifest(manifest_path, plan,
                  extra={"n_saturated": result.n_saturated,
                         "provenance": run_manifest(
                             cfg, inputs={"structure": args.structure},
                             outputs={"records": args.output})})
    print(f"wrote {len(result.records)} slice records to {args.output} "
          f"({result.n_saturated} saturated)")
    return EXIT_OK


def cmd_invert(args) -> int:
    from .inversion import (build_slice_matrix, grid_for_box, invert,
                            invert_sparse, save_density_image, spin_loads)
    from .scan import load_records
    from .signal_model import CoherenceParams
    cfg = _load_cfg(args)
    density = _density(cfg)
    records = load_records(args.records)
    pitch = cfg.voxel_pitch_nm * 1e-9
    grid = grid_for_box((0.0, 0.0), pitch, args.z_max * 1e-9,
                        args.half_width * 1e-9, pitch)
    coh = CoherenceParams(probe_t2=cfg.probe_t2_s,
                          target_t_rho=cfg.target_t_rho_s)
    matrix = build_slice_matrix(records, grid, density, coh,
                                isotope=cfg.isotope)
    loads = spin_loads(records, coh)
    if args.solver == "sparse":
        result = invert_sparse(matrix, loads)
    else:
        result = invert(matrix, loads, max_iter=args.max_iter)
    if not np.all(np.isfinite(result.density)):
        print("inversion produced non-finite densities", file=sys.stderr)
        return EXIT_NUMERICAL
    save_density_image(args.output, grid, result.density,
                       meta={"converged": result.converged,
                             "n_iter": result.n_iter,
                             "residual_norm": result.residual_norm})
    status = "converged" if result.converged else "not converged"
    print(f"inversion {status} after {result.n_iter} iterations "
          f"(residual {result.residual_norm:.3e}); wrote {args.output}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .analysis import (find_peaks, match_peaks, save_match_report,
                           save_peaks_csv)
    from .inversion import load_density_image
    grid, density, _ = load_density_image(args.image)
    peaks = find_peaks(grid, density, threshold_frac=args.threshold)
    save_peaks_csv(peaks, args.output)
    print(f"found {len(peaks)} peaks; wrote {args.output}")
    if args.truth:
        cfg = _load_cfg(args)
        truth = _read_targets(args.truth, cfg.isotope)
        report = match_peaks(peaks, truth, r_cut=2 * grid.pitch)
        report_path = args.output + ".match.json"
        save_match_report(report, report_path)
        dev = report.mean_deviation
        print(f"matched {report.n_matched}/{truth.shape[0]} sites, "
              f"mean deviation {dev * 1e10:.3f} angstrom -> {report_path}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import (DecouplingParams, SpinSystem, estimate_t_rho,
                         nss_signal_oracle, system_from_positions)
    from .constants import gyromagnetic
    cfg = _load_cfg(args)
    gamma_n = gyromagnetic(cfg.isotope).gamma
    couplings = [float(v) for v in args.couplings.split(",")]
    system = SpinSystem(couplings=couplings,
                        pair_couplings=np.zeros((len(couplings),) * 2),
                        gamma=gamma_n)
    dec = None
    if not args.no_decoupling:
        dec = DecouplingParams(tau=args.tau, b_pulse=args.b_pulse,
                               ideal_pulses=args.ideal_pulses)
    if args.t_rho:
        est = estimate_t_rho(system, dec, t_max=args.t_max)
        flag = " (lower bound)" if est.lower_bound else ""
        print(f"t_rho = {est.t_rho:.6e} s{flag}")
        return EXIT_OK
    res = nss_signal_oracle(system, args.gamma_slice, args.t_detect,
                            args.t_control, args.b_ac, decoupling=dec)
    json.dump({"s_net": res.s_net, "t_detect_eff": res.t_detect_eff,
               "t_control_eff": res.t_control_eff,
               "n_windows": res.n_windows}, sys.stdout, indent=1)
    print()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nanomri",
        description="Donor-probe nanoscale MRI simulation toolkit")
    ap.add_argument("--threads", type=int, default=None,
                    help="cap numpy thread count")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field", help="dipolar coupling profile along a ray")
    _add_common(p)
    p.add_argument("--theta", type=float, default=0.0, help="degrees")
    p.add_argument("--phi", type=float, default=0.0, help="degrees")
    p.add_argument("--r-min", type=float, default=0.025, help="nm")
    p.add_argument("--r-max", type=float, default=1.4, help="nm")
    p.add_argument("--samples", type=int, default=57)
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("time", help="experiment wall-clock estimate")
    _add_common(p)
    p.set_defaults(func=cmd_time)

    p = sub.add_parser("scan", help="simulate slice acquisition")
    _add_common(p)
    p.add_argument("structure", help="xyz or pdb target structure")
    p.add_argument("-o", "--output", required=True, help="records CSV")
    p.add_argument("--no-noise", action="store_true")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("invert", help="reconstruct a voxel density image")
    _add_common(p)
    p.add_argument("records", help="slice records CSV from scan")
    p.add_argument("-o", "--output", required=True, help="density image")
    p.add_argument("--half-width", type=float, default=1.0, help="nm")
    p.add_argument("--z-max", type=float, default=1.2, help="nm")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--solver", choices=("cgls", "sparse"), default="cgls")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("analyze", help="extract and match density peaks")
    _add_common(p)
    p.add_argument("image", help="density image file")
    p.add_argument("-o", "--output", required=True, help="peaks CSV")
    p.add_argument("--threshold", type=float, default=0.25)
    p.add_argument("--truth", help="structure file with true coordinates")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("oracle", help="exact small-cluster signal")
    _add_common(p)
    p.add_argument("--couplings", required=True,
                   help="comma-separated probe couplings, rad/s")
    p.add_argument("--gamma-slice", type=float, default=0.0)
    p.add_argument("--t-detect", type=float, default=1e-4)
    p.add_argument("--t-control", type=float, default=1e-3)
    p.add_argument("--b-ac", type=float, default=1e-7)
    p.add_argument("--tau", type=float, default=1e-6)
    p.add_argument("--b-pulse", type=float, default=1e-3)
    p.add_argument("--ideal-pulses", action="store_true")
    p.add_argument("--no-decoupling", action="store_true")
    p.add_argument("--t-rho", action="store_true",
                   help="estimate the cluster coherence time instead")
    p.add_argument("--t-max", type=float, default=1e-3)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError) as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RuntimeError, np.linalg.LinAlgError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
