#!/usr/bin/env python3
"""
Photon-Number-Resolved Fabry-Perot Toolkit
------------------------------------------
Fringe scans, sensitivity curves, detector simulation, fits, and resolution
tables for a Fabry-Perot interferometer read out photon by photon.
"""

import os
import sys
import logging
import argparse
from dataclasses import replace
from typing import Dict, List, Optional, Sequence

import pandas as pd
from dotenv import load_dotenv

from fabry_perot.coherent import CoherentInput
from fabry_perot.core_optics import transmission_probability
from fabry_perot.detector_sim import reconstruct_classical, scan_experiment
from fabry_perot.errors import ConfigError, FabryPerotError, FitConvergenceError, InvalidParameterError
from fabry_perot.fitting import dip_diagnostic, fit_classical, fit_per_k, fit_pnr_curves
from fabry_perot.metrology import fsr_from_curve, minima_table, resolution_table, sensitivity_curve
from fabry_perot.photon_stats import FringeCurve, fringe_scan

from utils.config import RunConfig, build_config, load_config_file, parse_grid, parse_ks
from utils.logger import setup_logger
from utils import report

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "FPI_OUTPUT_DIR"


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='dotenv-style config file; flags override it')
    common.add_argument('--output', type=str, help=f'Output directory (default ${OUTPUT_DIR_ENV} or ./data)')
    common.add_argument('--log-level', type=str, default='INFO', help='DEBUG, INFO, WARNING, ERROR or CRITICAL')
    common.add_argument('--log-file', type=str, help='Also log to this file')

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument('--input', type=str, help="Input state, e.g. 'coherent:3.9' or 'fock:4'")
    model.add_argument('--r2', type=float, help='Mirror power reflectivity |r|^2')
    model.add_argument('--grid', type=parse_grid, help="Phase grid 'start:stop:points' in L/lambda")

    parser = argparse.ArgumentParser(description='Photon-number-resolved Fabry-Perot toolkit')
    commands = parser.add_subparsers(dest='command', required=True)

    scan = commands.add_parser('scan', parents=[common, model], help='Model fringes p_k versus L/lambda')
    scan.add_argument('--k', type=parse_ks, help="Photon numbers, e.g. '1,2,3' or '1..7'")
    scan.add_argument('--classical', action='store_true', default=None, help='Also write the mean-count curve')
    scan.add_argument('--reflected', action='store_true', default=None, help='Also write the reflected mean count')

    sens = commands.add_parser('sensitivity', parents=[common, model], help='Phase uncertainty curves')
    sens.add_argument('--k', type=parse_ks, help='Photon numbers for photon-number detection')
    sens.add_argument('--mean', action='store_true', help='Also write the mean-count sensitivity of the input')
    sens.add_argument('--shot-noise', action='store_true', default=None,
                      help='Also write the coherent mean-count (shot-noise) curve')
    sens.add_argument('--minima', action='store_true', help='Write the minimal-uncertainty comparison table')
    sens.add_argument('--n', type=parse_ks, default=None, help="Photon numbers for --minima, e.g. '1..10'")

    sim = commands.add_parser('simulate', parents=[common, model], help='Monte Carlo detector scan')
    sim.add_argument('--pulses', type=int, help='Pulses per grid point')
    sim.add_argument('--kmax', type=int, dest='k_max_observable', help='Highest resolvable photon number')
    sim.add_argument('--noise', type=float, dest='noise_sigma', help='Pulse-integral noise in gain units')
    sim.add_argument('--gain', type=float, help='Pulse integral per photon')
    sim.add_argument('--seed', type=int, help='Random seed')
    sim.add_argument('--drift', type=float, help='Phase drift per grid point in L/lambda')
    sim.add_argument('--thresholds', choices=['oracle', 'data'], help='Threshold placement')
    sim.add_argument('--bin-width', type=float, help='Histogram bin width (default gain/50)')
    sim.add_argument('--workers', type=int, default=1, help='Threads for grid points')

    fit = commands.add_parser('fit', parents=[common], help='Fit photon-number-resolved curve files')
    fit.add_argument('files', nargs='+', help='Curve files written by scan or simulate')
    fit.add_argument('--k', type=parse_ks, help='Restrict the fit to these photon numbers')
    fit.add_argument('--mode', choices=['joint', 'per_k'], dest='fit_mode', help='Joint or per-k fit')
    fit.add_argument('--weights', choices=['uniform', 'counts'], help='Residual weighting')
    fit.add_argument('--fix-scale', action='store_true', default=None, help='Hold the scale factor at 1')
    fit.add_argument('--init-n-bar', type=float, help='Initial mean photon number')
    fit.add_argument('--init-r2', type=float, help='Initial reflectivity')
    fit.add_argument('--classical-fit', action='store_true', help='Also fit the reconstructed classical signal')
    fit.add_argument('--dips', action='store_true', help='Also run the dip diagnostic')

    res = commands.add_parser('resolution', parents=[common], help='Peak spreads against the classical peak')
    res.add_argument('files', nargs='+', help='Curve files written by scan or simulate')
    res.add_argument('--fsr', action='store_true', help='Also estimate the FSR from two peaks of each curve')
    res.add_argument('--lambda-nm', type=float, help='Wavelength in nm')
    res.add_argument('--fsr-nm', type=float, help='Calibrate nm on this FSR')
    res.add_argument('--fwhm-nm', type=float, help='Calibrate nm on this classical FWHM')
    res.add_argument('--window-fwhm', type=float, help='Window half-width in classical FWHMs')
    res.add_argument('--full-window', action='store_true', help='Use one full FSR as the window')

    return parser.parse_args(argv)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge config file, environment, and flags into one RunConfig."""
    file_values = load_config_file(args.config) if args.config else {}
    if 'output' not in file_values and os.environ.get(OUTPUT_DIR_ENV):
        file_values['output'] = os.environ[OUTPUT_DIR_ENV]

    overrides = {name: getattr(args, name, None) for name in (
        'input', 'r2', 'pulses', 'k_max_observable', 'noise_sigma', 'gain', 'seed', 'drift',
        'thresholds', 'bin_width', 'fit_mode', 'weights', 'fix_scale', 'lambda_nm', 'fsr_nm',
        'fwhm_nm', 'window_fwhm', 'classical', 'reflected', 'shot_noise', 'output',
    )}
    overrides['command'] = args.command
    overrides['ks'] = getattr(args, 'k', None)
    if getattr(args, 'grid', None):
        overrides['grid_start'], overrides['grid_stop'], overrides['grid_points'] = args.grid
    config = build_config(file_values, overrides)
    if getattr(args, 'full_window', False):
        config = replace(config, window_fwhm=None)
    return config


def run_scan(config: RunConfig) -> List[str]:
    """Write one file per requested fringe curve."""
    curves = fringe_scan(config.state, config.mirror, config.grid, config.ks,
                         classical=config.classical, reflected=config.reflected)
    header = config.to_header()
    paths = [
        report.write_curve(os.path.join(config.output, report.curve_filename('scan', c)), c, header)
        for c in curves
    ]
    logger.info(f"Wrote {len(paths)} scan file(s) to {config.output}")
    return paths


def run_sensitivity(config: RunConfig, args: argparse.Namespace) -> List[str]:
    """Write sensitivity curves, or the minimal-uncertainty table with --minima."""
    header = config.to_header()
    if args.minima:
        n_values = args.n or tuple(range(1, 11))
        df = report.minima_frame(minima_table(n_values, config.mirror))
        path = report.write_table(os.path.join(config.output, 'sensitivity_minima.csv'), df, header)
        print(report.format_frame(df))
        return [path]

    state, mirror = config.state, config.mirror
    curves = [sensitivity_curve(state, mirror, config.grid, k) for k in config.ks]
    if args.mean:
        curves.append(sensitivity_curve(state, mirror, config.grid))
    if config.shot_noise:
        curves.append(sensitivity_curve(CoherentInput(state.parameter), mirror, config.grid))
    if not curves:
        raise InvalidParameterError("Nothing to compute: give --k, --mean, --shot-noise or --minima")

    paths = []
    for curve in curves:
        path = os.path.join(config.output, report.sensitivity_filename(curve))
        if path in paths:
            continue
        paths.append(report.write_table(path, report.sensitivity_frame(curve), header + report.sensitivity_header(curve)))
        undefined = int((~curve.defined).sum())
        if undefined:
            logger.info(f"{os.path.basename(path)}: {undefined} undefined sample(s) left empty")
    logger.info(f"Wrote {len(paths)} sensitivity file(s) to {config.output}")
    return paths


def run_simulate(config: RunConfig, args: argparse.Namespace) -> List[str]:
    """Simulate the detector chain and write histogram, curves, reconstruction, and summary."""
    state, mirror = config.state, config.mirror
    result = scan_experiment(
        state, mirror, config.grid, config.pulses, config.detector,
        drift=config.drift, threshold_mode=config.thresholds, bin_width=config.bin_width,
        workers=args.workers,
    )
    header = config.to_header()
    out = config.output
    paths = [report.write_table(os.path.join(out, 'simulate_histogram.csv'),
                                report.histogram_frame(result.histogram),
                                header + report.histogram_header(result.histogram))]
    for curve in result.curves:
        paths.append(report.write_curve(os.path.join(out, report.curve_filename('simulate', curve)), curve, header))

    reconstructed = reconstruct_classical(result.curves)
    reconstructed.meta['port'] = 'reconstructed'
    paths.append(report.write_curve(
        os.path.join(out, f"simulate_{state.kind}{state.parameter:g}_reconstructed.csv"), reconstructed, header))

    summary = dict(result.summary)
    if state.parameter:
        exact = state.mean_counts(transmission_probability(mirror, config.grid.values))
        summary['reconstruction_ratio_at_peak'] = report.reconstruction_ratio(reconstructed, exact)
    paths.append(report.write_table(os.path.join(out, 'simulate_summary.csv'), report.summary_frame(summary), header))
    print(report.format_frame(report.summary_frame(summary)))
    return paths


def _load_curves(files: Sequence[str]) -> List[FringeCurve]:
    return [report.read_curve(path) for path in files]


def run_fit(config: RunConfig, args: argparse.Namespace) -> List[str]:
    """Fit curve files and write the fit report."""
    curves = _load_curves(args.files)
    resolved = [c for c in curves if not c.is_mean]
    init: Dict[str, float] = {}
    if args.init_n_bar is not None:
        init['n_bar'] = args.init_n_bar
    if args.init_r2 is not None:
        init['r2'] = args.init_r2
    ks = config.ks or None

    try:
        if config.fit_mode == 'joint':
            results = [fit_pnr_curves(resolved, ks, init, config.weights, config.fix_scale)]
        else:
            results = list(fit_per_k(resolved, ks, init, config.weights).values())
        if args.classical_fit:
            mean = [c for c in curves if c.is_mean]
            target = mean[0] if mean else reconstruct_classical(resolved)
            results.append(fit_classical(target, init, config.weights))
    except FitConvergenceError as e:
        if e.best is not None:
            print(report.format_frame(report.fit_frame([e.best])))
        raise

    header = config.to_header()
    df = report.fit_frame(results)
    paths = [report.write_table(os.path.join(config.output, 'fit_report.csv'), df, header)]
    print(report.format_frame(df))

    if args.dips:
        diagnosis = dip_diagnostic(resolved)
        dips = pd.DataFrame({
            'k': list(diagnosis.dips),
            'dip': list(diagnosis.dips.values()),
            'depth': list(diagnosis.depths.values()),
        })
        dip_header = header + [('curve.bound', diagnosis.bound), ('curve.center', repr(diagnosis.center))]
        paths.append(report.write_table(os.path.join(config.output, 'fit_dips.csv'), dips, dip_header))
        print(f"Dip diagnostic: {diagnosis.bound}")
    return paths


def run_resolution(config: RunConfig, args: argparse.Namespace) -> List[str]:
    """Resolution table (and optional FSR estimates) from curve files."""
    curves = _load_curves(args.files)
    resolved = [c for c in curves if not c.is_mean and c.k >= 1]
    mean = [c for c in curves if c.is_mean and c.meta.get('port') not in ('reflected', 'reconstructed')]
    if not resolved:
        raise InvalidParameterError("Resolution needs at least one photon-number-resolved curve")
    classical = mean[0] if mean else reconstruct_classical(resolved)

    table = resolution_table(resolved, classical, config.axis_scale, config.window_fwhm)
    header = config.to_header()
    df = report.resolution_frame(table)
    paths = [report.write_table(os.path.join(config.output, 'resolution_table.csv'), df, header)]
    print(report.format_frame(df))

    if args.fsr:
        rows = []
        for curve in resolved + [classical]:
            estimate = fsr_from_curve(curve, config.window_fwhm or 2.0)
            rows.append({'curve': curve.label if curve.is_mean else f"k={curve.k}",
                         'delta_l': estimate.delta_l, 'sigma_delta_l': estimate.sigma_delta_l})
        fsr_df = pd.DataFrame(rows)
        paths.append(report.write_table(os.path.join(config.output, 'resolution_fsr.csv'), fsr_df, header))
        print(report.format_frame(fsr_df))
    return paths


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point of the application."""
    args = parse_arguments(argv)
    setup_logger(args.log_level, args.log_file)
    config = resolve_config(args)
    os.makedirs(config.output, exist_ok=True)

    if args.command == 'scan':
        run_scan(config)
    elif args.command == 'sensitivity':
        run_sensitivity(config, args)
    elif args.command == 'simulate':
        run_simulate(config, args)
    elif args.command == 'fit':
        run_fit(config, args)
    elif args.command == 'resolution':
        run_resolution(config, args)
    else:
        raise ConfigError(f"Unknown command {args.command}")
    return 0


def run(argv: Optional[Sequence[str]] = None) -> int:
    """main() with errors mapped to exit codes."""
    try:
        return main(argv)
    except KeyboardInterrupt:
        logger.info("Interrupted by user.")
        return 0
    except FabryPerotError as e:
        logger.error(str(e))
        return e.exit_code
    except Exception as e:
        logger.critical(f"Unhandled exception: {str(e)}")
        return 1


if __name__ == "__main__":
    load_dotenv()
    sys.exit(run())
