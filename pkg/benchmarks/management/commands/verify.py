from django.core.management.base import CommandError

from benchmarks.verification import SUITES, run_suites
from ._base import IDDCommand


class Command(IDDCommand):
    help = 'Run the oracle and invariant suites'

    def add_arguments(self, parser):
        parser.add_argument('--suite', action='append', choices=sorted(SUITES), help='Suite to run (repeatable)')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--full', action='store_true', help='Full-size instance counts')

    def execute_command(self, *args, **options):
        results = run_suites(options['suite'], seed=options['seed'], full=options['full'])
        for check in results:
            style = self.style.SUCCESS if check.passed else self.style.ERROR
            self.stdout.write(style(f"[{'PASS' if check.passed else 'FAIL'}] {check.suite}.{check.name} {check.detail}"))
        failed = [check for check in results if not check.passed]
        if failed:
            raise CommandError(f"{len(failed)} of {len(results)} checks failed", returncode=1)
        self.stdout.write(self.style.SUCCESS(f"All {len(results)} checks passed"))
