import json

from django.core.management.base import CommandError

from benchmarks.serializers import BenchmarkConfigSerializer, describe_schema, validated
from benchmarks.services import apply_overrides, cmd_benchmark, record_run, summary_rows
from idd_monitor.exceptions import BenchmarkPointError
from ._base import IDDCommand, load_json


class Command(IDDCommand):
    help = 'Run a matched-ARL0 Monte-Carlo benchmark and write its report'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Benchmark config (JSON)')
        parser.add_argument('--seed', type=int, help='Master seed override')
        parser.add_argument('--out', help='Directory for report.json, points.csv and tradeoff.csv')
        parser.add_argument('--threads', type=int, help='Replications run in parallel')
        parser.add_argument('--target-arl0', type=float, nargs='+', dest='target_arl0')
        parser.add_argument('--detector', action='append', help='Only run this detector (repeatable)')
        parser.add_argument('--print-schema', action='store_true', help='Print the config schema and exit')
        parser.add_argument('--record', action='store_true', help='Store the run in the database')

    def execute_command(self, *args, **options):
        if options['print_schema']:
            self.stdout.write(json.dumps(describe_schema(BenchmarkConfigSerializer()), indent=2, default=str))
            return
        if not options['config']:
            raise CommandError('--config is required', returncode=2)

        config = validated(BenchmarkConfigSerializer, load_json(options['config']), 'benchmark config')
        config = apply_overrides(
            config, seed=options['seed'], threads=options['threads'],
            target_arl0=options['target_arl0'], detectors=options['detector'],
        )
        report = cmd_benchmark(config, options['out'])
        if options['record']:
            run = record_run(report)
            self.stdout.write(f"Recorded run {run.id}")

        for row in summary_rows(report):
            self.stdout.write(
                f"{row['stream']:>18} {row['detector']:>12} ARL0*={row['target']:g} "
                f"ARL0={row['arl0']} ARL1={row['arl1']} detection={row['detection_rate']} [{row['status']}]"
            )
        if report.failed_points:
            raise BenchmarkPointError(f"{len(report.failed_points)} benchmark points failed; partial results written")
        self.stdout.write(self.style.SUCCESS(f"Benchmark '{report.name}' completed"))
