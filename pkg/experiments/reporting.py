"""
Run reports and per-sample CSV output
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from django.db import DatabaseError

logger = logging.getLogger('hfisim')

CSV_COLUMNS = [
    ('t', 's', 'sample time'),
    ('phi_gamma', 'Wb', 'gamma-axis stator flux'),
    ('phi_delta', 'Wb', 'delta-axis stator flux'),
    ('omega', 'rad/s', 'electrical rotor speed'),
    ('theta', 'rad', 'electrical rotor angle'),
    ('theta_c', 'rad', 'controller frame angle'),
    ('i_gamma', 'A', 'recorded gamma-axis current'),
    ('i_delta', 'A', 'recorded delta-axis current'),
    ('u_gamma', 'V', 'applied gamma-axis voltage'),
    ('u_delta', 'V', 'applied delta-axis voltage'),
    ('i_bar_gamma', 'A', 'demodulated mean current, gamma'),
    ('i_bar_delta', 'A', 'demodulated mean current, delta'),
    ('i_tilde_gamma', 'A', 'demodulated ripple envelope, gamma'),
    ('i_tilde_delta', 'A', 'demodulated ripple envelope, delta'),
    ('theta_hat', 'rad', 'estimated electrical rotor angle'),
    ('err_deg', 'deg', 'wrapped estimation error theta_hat - theta'),
]
COLUMN_NAMES = [c[0] for c in CSV_COLUMNS]


@dataclass
class RunReport:
    scenario: str
    runtime: float
    seed: int = 0
    source: str = 'preset'
    omega_inj: Optional[float] = None
    max_error_deg: Optional[float] = None
    mean_error_deg: Optional[float] = None
    max_error_deg_no_saturation: Optional[float] = None
    mean_error_deg_no_saturation: Optional[float] = None
    averaging: Optional[dict] = None
    observability: Optional[list] = None
    csv_path: str = ''

    def as_dict(self):
        return asdict(self)

    def summary_lines(self):
        lines = [f'{self.scenario}: {self.runtime:.1f} s']
        if self.max_error_deg is not None:
            lines.append(
                f'  position error with saturation model: max {self.max_error_deg:.2f} deg, '
                f'mean {self.mean_error_deg:.2f} deg'
            )
        if self.max_error_deg_no_saturation is not None:
            lines.append(
                f'  position error without saturation model: max {self.max_error_deg_no_saturation:.2f} deg, '
                f'mean {self.mean_error_deg_no_saturation:.2f} deg'
            )
        if self.averaging:
            for ratio in self.averaging['ratios']:
                lines.append(
                    f'  averaging ratios x{ratio["omega_ratio"]:.0f}: e_mech {ratio["e_mech"]:.3f}, '
                    f'e_flux {ratio["e_flux"]:.3f}, raw {ratio["e_flux_raw"]:.3f}'
                )
        if self.observability:
            full = sum(row['rank'] == 5 for row in self.observability)
            lines.append(f'  observability: {full}/{len(self.observability)} points of full rank')
        if self.csv_path:
            lines.append(f'  data: {self.csv_path}')
        return lines


def error_stats(traj):
    """(max, mean) absolute estimation error in degrees over the valid samples"""
    if not traj.has_estimates or not np.any(traj.valid):
        return None, None
    err = np.degrees(np.abs(traj.err[traj.valid]))
    return float(err.max()), float(err.mean())


def trajectory_frame(traj):
    K = len(traj)

    def pair(series):
        return (np.full(K, np.nan), np.full(K, np.nan)) if series is None else (series[:, 0], series[:, 1])

    i_bar = pair(traj.i_bar_gd)
    i_tilde = pair(traj.i_tilde_gd)
    theta_hat = traj.theta_hat if traj.has_estimates else np.full(K, np.nan)
    err = np.degrees(traj.err) if traj.err is not None else np.full(K, np.nan)
    columns = [
        traj.t, traj.x[:, 0], traj.x[:, 1], traj.omega, traj.theta, traj.theta_c,
        traj.i_gd[:, 0], traj.i_gd[:, 1], traj.u_gd[:, 0], traj.u_gd[:, 1],
        i_bar[0], i_bar[1], i_tilde[0], i_tilde[1], theta_hat, err,
    ]
    return pd.DataFrame(dict(zip(COLUMN_NAMES, columns)), columns=COLUMN_NAMES)


def emit_csv(traj, path):
    """
    Header row then one row per sample; 9 significant digits, comma
    separated, LF line endings. Missing estimates are left empty.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trajectory_frame(traj).to_csv(path, index=False, float_format='%.9g', lineterminator='\n')
    logger.info(f'Wrote {len(traj)} samples to {path}')
    return path


def write_manifest(csv_path, columns, **meta):
    """Column manifest (name, unit, description) saved next to a CSV file"""
    csv_path = Path(csv_path)
    manifest = {
        'file': csv_path.name,
        'columns': [{'name': n, 'unit': u, 'description': d} for n, u, d in columns],
        **meta,
    }
    path = csv_path.with_suffix('.manifest.json')
    path.write_text(json.dumps(manifest, indent=2), encoding='utf-8')
    return path


def emit_table(rows, path, columns):
    """Write a list of flat dict rows (sweep tables) with the same CSV conventions"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=columns).to_csv(
        path, index=False, float_format='%.9g', lineterminator='\n',
    )
    return path


def persist_report(report):
    """Save a report as a SimulationRun; failures are logged and the run continues"""
    from .models import SimulationRun

    try:
        return SimulationRun.objects.create(**report.as_dict())
    except DatabaseError as exc:
        logger.warning(f'Could not persist run {report.scenario}: {exc}')
        return None
