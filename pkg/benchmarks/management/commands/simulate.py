from django.core.management.base import CommandError

from synthgen.serializers import stream_spec_from_dict
from synthgen.services import SCENARIOS, SyntheticStream
from ._base import IDDCommand, load_json


class Command(IDDCommand):
    help = 'Write a synthetic stream file from a stream spec'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Stream spec (JSON)')
        parser.add_argument('--scenario', choices=SCENARIOS, help='Scenario with default parameters')
        parser.add_argument('--seed', type=int, help='Replication seed; defaults to the spec seed')
        parser.add_argument('--out', required=True, help='Stream file to write')

    def execute_command(self, *args, **options):
        if bool(options['config']) == bool(options['scenario']):
            raise CommandError('Give exactly one of --config and --scenario', returncode=2)
        payload = load_json(options['config']) if options['config'] else {'scenario': options['scenario']}
        spec = stream_spec_from_dict(payload)
        count = SyntheticStream(spec, options['seed']).export(options['out'])
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {count} batches of '{spec.scenario}' (change after t={spec.change_point}) -> {options['out']}"
        ))
