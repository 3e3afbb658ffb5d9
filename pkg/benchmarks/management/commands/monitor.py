from benchmarks.services import cmd_monitor
from detection.services import MonitorSession
from ._base import IDDCommand


class Command(IDDCommand):
    help = 'Monitor a stream file with a calibrated model and write the alarm file'

    def add_arguments(self, parser):
        parser.add_argument('--model', required=True, help='Model file from calibrate')
        parser.add_argument('--stream', required=True, help='Stream file to monitor')
        parser.add_argument('--out', required=True, help='Alarm file to write')
        parser.add_argument('--mode', choices=MonitorSession.MODES, default='monitoring',
                            help="'benchmark' stops at the first alarm")

    def execute_command(self, *args, **options):
        summary = cmd_monitor(options['model'], options['stream'], options['out'], mode=options['mode'])
        first = summary.first_alarm if summary.first_alarm is not None else '-'
        self.stdout.write(self.style.SUCCESS(
            f"Monitored {summary.batches} batches: {summary.alarm_count} alarms "
            f"({summary.alarm_fraction:.3%}), first alarm at t={first} -> {options['out']}"
        ))
