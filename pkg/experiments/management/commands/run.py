"""
python manage.py run <preset|config-path> [--out DIR] [--seed N] [--omega-inj HZ]
                     [--no-saturation-estimator]

Exit status: 0 on success, 2 for an invalid configuration, 3 for a numerical failure.
"""

import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from experiments.config import ConfigError
from experiments.presets import PRESETS, run_config, run_preset
from experiments.reporting import persist_report
from motor_models.exceptions import MotorModelError

logger = logging.getLogger('hfisim')


class Command(BaseCommand):
    help = 'Run a preset experiment or a scenario config file and write CSV output'

    def add_arguments(self, parser):
        parser.add_argument('target', help=f'preset name ({", ".join(PRESETS)}) or path to a config file')
        parser.add_argument('--out', default=None, help='output directory (default HFISIM_OUTPUT_DIR)')
        parser.add_argument('--seed', type=int, default=None, help='measurement-noise seed')
        parser.add_argument('--omega-inj', type=float, default=None, dest='omega_inj',
                            help='injection frequency in Hz')
        parser.add_argument('--no-saturation-estimator', action='store_false',
                            dest='saturation_estimator',
                            help='estimate with the saturation terms removed from the model')
        parser.add_argument('--no-save', action='store_false', dest='save',
                            help='do not record the run in the database')

    def handle(self, *args, **options):
        target = options['target']
        common = {
            'out_dir': options['out'],
            'seed': options['seed'],
            'omega_inj_hz': options['omega_inj'],
            'saturation_estimator': options['saturation_estimator'],
        }
        if options['omega_inj'] is not None and not options['omega_inj'] > 0:
            raise CommandError('--omega-inj must be positive', returncode=2)

        try:
            if target in PRESETS:
                report = run_preset(target, **common)
            elif Path(target).is_file():
                report = run_config(target, **common)
            else:
                raise CommandError(
                    f'{target!r} is neither a preset ({", ".join(PRESETS)}) nor a config file',
                    returncode=2,
                )
        except ConfigError as exc:
            raise CommandError(f'Invalid configuration: {exc}', returncode=2)
        except (MotorModelError, ValueError) as exc:
            logger.error(f'Run {target} failed: {exc}')
            raise CommandError(f'Numerical failure: {exc}', returncode=3)
        except OSError as exc:
            raise CommandError(f'Cannot write output: {exc}')

        if options['save']:
            persist_report(report)
        for line in report.summary_lines():
            self.stdout.write(line)
        self.stdout.write(self.style.SUCCESS(f'Finished {report.scenario}'))
