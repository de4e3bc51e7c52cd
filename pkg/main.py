import argparse
import csv
import io
import logging
import os
import sys
from typing import List, Optional, Sequence, TextIO

from dotenv import load_dotenv
from tqdm import tqdm

from cf_engine import CfTruncationError, FasConfig
from correlation import CorrelationModel, NumericInconsistencyError, mu_from_w
from mc_sim import simulate_ser
from modem import ModulationScheme
from sep_analytic import QuadratureError, SepResult, sep
from settings import settings
from utils import fmt_sci, setup_logger
from validate import SUITES, run_validation

# Загрузка переменных окружения
load_dotenv()

logger = logging.getLogger(__name__)

DEFAULT_W = 0.2
DEFAULT_MODS = 'ask:2,ask:4,psk:4,psk:8,qam:16,bfsk'
SEP_COLUMNS = ['snr_db', 'mod', 'M', 'N', 'K', 'W', 'mu', 'sep', 'method', 'diag']
SWEEP_COLUMNS = ['snr_db', 'mod', 'M', 'N', 'K', 'W', 'mu', 'sep_exact', 'sep_asym', 'sep_mc',
                 'mc_ci_low', 'mc_ci_high', 'trials', 'errors', 'seed']
SIMULATE_COLUMNS = ['snr_db', 'mod', 'M', 'N', 'K', 'W', 'mu', 'ser', 'ci_low', 'ci_high',
                    'trials', 'errors', 'seed']
SWEEP_AXES = ('snr_db', 'K', 'W')

# ошибки численного ядра дают код 1, ошибки аргументов дают код 2
NUMERIC_ERRORS = (CfTruncationError, QuadratureError, NumericInconsistencyError, ArithmeticError)


def parse_values(text: str, integer: bool = False) -> List[float]:
    """Список значений: '0,5,10' или диапазон 'start:stop:step' (включая stop)"""
    text = text.strip()
    if ':' in text:
        parts = text.split(':')
        if len(parts) != 3:
            raise ValueError(f"range must look like start:stop:step, got {text!r}")
        start, stop, step = (float(part) for part in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"range {text!r} must have step > 0 and stop >= start")
        count = int(round((stop - start) / step)) + 1
        values = [start + i * step for i in range(count)]
    else:
        values = [float(part) for part in text.split(',') if part.strip()]
    if not values:
        raise ValueError("at least one value is required")
    if integer:
        if any(v != int(v) for v in values):
            raise ValueError(f"integer values expected, got {text!r}")
        return [int(v) for v in values]
    return values


def parse_mods(text: str) -> List[ModulationScheme]:
    """Схемы модуляции: 'ask:4,psk:8,qam:16,bfsk'"""
    schemes = []
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        name, _, order = item.partition(':')
        schemes.append(ModulationScheme.parse(name, int(order) if order else 2))
    if not schemes:
        raise ValueError("at least one modulation is required")
    return schemes


def _fmt_input(value: Optional[float]) -> str:
    return '' if value is None else f"{value:g}"


class FasCli:
    def __init__(self):
        self.parser = self.build_parser()

    def build_parser(self) -> argparse.ArgumentParser:
        """Парсер аргументов с подкомандами mu, sep, sweep, simulate, validate"""
        parser = argparse.ArgumentParser(
            prog='fas-sep',
            description='SEP of a fluid antenna receiver with best-K-of-N port selection and MRC',
        )
        parser.add_argument('--log-level', default=None,
                            help='logging level name (default: FAS_LOG_LEVEL or INFO)')
        parser.add_argument('--workers', type=int, default=None,
                            help='worker processes for Monte Carlo (default: FAS_WORKERS)')
        subparsers = parser.add_subparsers(dest='command', required=True)

        mu_parser = subparsers.add_parser('mu', help='port correlation for aperture W')
        mu_parser.add_argument('--W', type=float, required=True, help='aperture in wavelengths')
        mu_parser.set_defaults(handler=self.mu_command)

        sep_parser = subparsers.add_parser('sep', help='SEP at one operating point')
        self._add_link_arguments(sep_parser)
        sep_parser.add_argument('--mod', required=True, help='ask, psk, qam or bfsk')
        sep_parser.add_argument('--M', type=int, default=2, help='modulation order')
        sep_parser.add_argument('--snr-db', type=float, required=True, help='average SNR in dB')
        sep_parser.add_argument('--method', choices=('exact', 'asym', 'quad'), default='exact')
        sep_parser.set_defaults(handler=self.sep_command)

        sweep_parser = subparsers.add_parser('sweep', help='SEP curves over one parameter, written as CSV')
        self._add_link_arguments(sweep_parser)
        sweep_parser.add_argument('--axis', choices=SWEEP_AXES, required=True)
        sweep_parser.add_argument('--values', required=True, help="'0,5,10' or 'start:stop:step'")
        sweep_parser.add_argument('--mods', default=DEFAULT_MODS, help=f"schemes (default: {DEFAULT_MODS})")
        sweep_parser.add_argument('--snr-db', default='10',
                                  help='fixed SNR values in dB for the K and W axes')
        sweep_parser.add_argument('--out', required=True, help="output CSV path or '-' for stdout")
        sweep_parser.add_argument('--no-asym', action='store_true', help='skip the asymptotic column')
        sweep_parser.add_argument('--with-mc', action='store_true', help='add Monte Carlo columns')
        sweep_parser.add_argument('--trials', type=float, default=None, help='Monte Carlo trial cap')
        sweep_parser.add_argument('--target-errors', type=int, default=None)
        sweep_parser.add_argument('--seed', type=int, default=0)
        sweep_parser.add_argument('--progress', action='store_true', help='progress bar on stderr')
        sweep_parser.set_defaults(handler=self.sweep_command)

        sim_parser = subparsers.add_parser('simulate', help='Monte Carlo SER at one operating point')
        self._add_link_arguments(sim_parser)
        sim_parser.add_argument('--mod', required=True)
        sim_parser.add_argument('--M', type=int, default=2)
        sim_parser.add_argument('--snr-db', type=float, required=True)
        sim_parser.add_argument('--trials', type=float, default=None)
        sim_parser.add_argument('--target-errors', type=int, default=None)
        sim_parser.add_argument('--chunk-size', type=int, default=None)
        sim_parser.add_argument('--seed', type=int, default=0)
        sim_parser.set_defaults(handler=self.simulate_command)

        val_parser = subparsers.add_parser('validate', help='run the numerical check suites')
        val_parser.add_argument('--suite', choices=SUITES + ('all',), default='all')
        val_parser.add_argument('--trials', type=float, default=1e6, help='Monte Carlo trials per check')
        val_parser.add_argument('--seed', type=int, default=1)
        val_parser.set_defaults(handler=self.validate_command)
        return parser

    @staticmethod
    def _add_link_arguments(parser: argparse.ArgumentParser) -> None:
        parser.add_argument('--N', type=int, default=10, help='number of ports')
        parser.add_argument('--K', type=int, default=4, help='number of selected ports')
        parser.add_argument('--W', type=float, default=None, help=f'aperture in wavelengths (default: {DEFAULT_W})')
        parser.add_argument('--mu', type=float, default=None, help='correlation parameter (overrides --W)')

    # Сборка конфигурации с сообщениями, указывающими на флаг

    def _model(self, W: Optional[float], mu: Optional[float]) -> CorrelationModel:
        try:
            return CorrelationModel.resolve(W=DEFAULT_W if W is None and mu is None else W, mu=mu)
        except ValueError as e:
            self.parser.error(f"{'--mu' if mu is not None else '--W'}: {e}")

    def _config(self, N: int, K: int, model: CorrelationModel, snr_db: float) -> FasConfig:
        if N < 1:
            self.parser.error(f"--N must be >= 1, got {N}")
        if not 1 <= K <= N:
            self.parser.error(f"--K must satisfy 1 <= K <= N={N}, got {K}")
        return FasConfig.from_snr_db(N, K, model, snr_db)

    def _scheme(self, name: str, M: int) -> ModulationScheme:
        try:
            return ModulationScheme.parse(name, M)
        except ValueError as e:
            self.parser.error(f"--mod/--M: {e}")

    @staticmethod
    def _write_rows(stream: TextIO, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)

    def mu_command(self, args) -> int:
        """Коэффициент корреляции mu(W)"""
        if not args.W > 0:
            self.parser.error(f"--W: W must be positive, got {args.W}")
        mu = mu_from_w(args.W)
        print(f"{mu:.6g}")
        return 0

    def sep_command(self, args) -> int:
        """Строка CSV с SEP в одной точке"""
        scheme = self._scheme(args.mod, args.M)
        model = self._model(args.W, args.mu)
        cfg = self._config(args.N, args.K, model, args.snr_db)
        result = sep(scheme, cfg, args.method)
        diag = result.describe()
        if args.method != 'asym':
            asym = sep(scheme, cfg, 'asym')
            ratio = asym.value / result.value if result.value > 0 else float('inf')
            diag = f"{diag};asym_ratio={ratio:.6e}" if diag else f"asym_ratio={ratio:.6e}"
        row = [_fmt_input(args.snr_db), scheme.kind.value, str(scheme.M), str(cfg.N), str(cfg.K),
               _fmt_input(model.W), fmt_sci(model.mu), fmt_sci(result.value), result.method.value, diag]
        self._write_rows(sys.stdout, SEP_COLUMNS, [row])
        return 0

    def _sweep_cells(self, args):
        try:
            values = parse_values(args.values, integer=args.axis == 'K')
        except ValueError as e:
            self.parser.error(f"--values: {e}")
        try:
            schemes = parse_mods(args.mods)
        except ValueError as e:
            self.parser.error(f"--mods: {e}")
        if args.axis == 'snr_db':
            snr_list = [None]
        else:
            try:
                snr_list = parse_values(args.snr_db)
            except ValueError as e:
                self.parser.error(f"--snr-db: {e}")
        if args.axis == 'W' and any(v <= 0 for v in values):
            self.parser.error("--values: W must be positive")
        if args.axis == 'K' and any(not 1 <= v <= args.N for v in values):
            self.parser.error(f"--values: K must satisfy 1 <= K <= N={args.N}")

        cells = []
        for scheme in schemes:
            for snr_fixed in snr_list:
                for value in values:
                    snr_db = value if args.axis == 'snr_db' else snr_fixed
                    K = value if args.axis == 'K' else args.K
                    W = value if args.axis == 'W' else args.W
                    mu = None if args.axis == 'W' else args.mu
                    cells.append((scheme, snr_db, K, W, mu))
        return cells

    def _sweep_row(self, args, scheme: ModulationScheme, snr_db: float, K: int,
                   W: Optional[float], mu: Optional[float]) -> List[str]:
        model = self._model(W, mu)
        cfg = self._config(args.N, K, model, snr_db)
        exact: SepResult = sep(scheme, cfg, 'exact')
        asym = None if args.no_asym else sep(scheme, cfg, 'asym').value
        mc_fields = [''] * 6
        if args.with_mc:
            estimate = simulate_ser(cfg, scheme, max_trials=args.trials, target_errors=args.target_errors,
                                    seed=args.seed, workers=args.workers)
            mc_fields = [fmt_sci(estimate.ser), fmt_sci(estimate.ci_low), fmt_sci(estimate.ci_high),
                         str(estimate.trials), str(estimate.errors), str(estimate.seed)]
        return ([_fmt_input(snr_db), scheme.kind.value, str(scheme.M), str(cfg.N), str(cfg.K),
                 _fmt_input(model.W), fmt_sci(model.mu), fmt_sci(exact.value), fmt_sci(asym)] + mc_fields)

    def sweep_command(self, args) -> int:
        """CSV с кривыми SEP вдоль одной оси"""
        if args.out != '-':
            directory = os.path.dirname(os.path.abspath(args.out))
            if not os.path.isdir(directory) or not os.access(directory, os.W_OK):
                self.parser.error(f"--out: directory {directory} is not writable")
        cells = self._sweep_cells(args)
        logger.info(f"Sweep over {args.axis}: {len(cells)} cells")

        rows = [self._sweep_row(args, *cell)
                for cell in tqdm(cells, desc='sweep', disable=not args.progress, file=sys.stderr)]

        buffer = io.StringIO()
        self._write_rows(buffer, SWEEP_COLUMNS, rows)
        if args.out == '-':
            sys.stdout.write(buffer.getvalue())
        else:
            with open(args.out, 'w', encoding='utf-8', newline='') as f:
                f.write(buffer.getvalue())
            logger.info(f"Sweep written to {args.out}: {len(rows)} rows")
        return 0

    def simulate_command(self, args) -> int:
        """Монте-Карло оценка SER в одной точке"""
        scheme = self._scheme(args.mod, args.M)
        model = self._model(args.W, args.mu)
        cfg = self._config(args.N, args.K, model, args.snr_db)
        estimate = simulate_ser(cfg, scheme, max_trials=args.trials, target_errors=args.target_errors,
                                seed=args.seed, chunk_size=args.chunk_size, workers=args.workers)
        row = [_fmt_input(args.snr_db), scheme.kind.value, str(scheme.M), str(cfg.N), str(cfg.K),
               _fmt_input(model.W), fmt_sci(model.mu), fmt_sci(estimate.ser), fmt_sci(estimate.ci_low),
               fmt_sci(estimate.ci_high), str(estimate.trials), str(estimate.errors), str(estimate.seed)]
        self._write_rows(sys.stdout, SIMULATE_COLUMNS, [row])
        return 0

    def validate_command(self, args) -> int:
        """Наборы проверок; код 0 только если все прошли"""
        suites = SUITES if args.suite == 'all' else (args.suite,)
        return run_validation(suites, mc_trials=int(args.trials), seed=args.seed, workers=args.workers)

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        args = self.parser.parse_args(argv)
        level_name = (args.log_level or logging.getLevelName(settings.log_level)).upper()
        level = logging.getLevelName(level_name)
        if not isinstance(level, int):
            self.parser.error(f"--log-level: unknown level {args.log_level!r}")
        if args.workers is not None and args.workers < 1:
            self.parser.error(f"--workers must be >= 1, got {args.workers}")
        setup_logger('', level=level)

        try:
            return args.handler(args)
        except NUMERIC_ERRORS as e:
            logger.error(f"Numeric failure in {args.command}: {e}")
            return 1
        except (ValueError, RuntimeError) as e:
            logger.error(f"Error in {args.command}: {e}")
            return 1
        except OSError as e:
            logger.error(f"Cannot write output in {args.command}: {e}")
            return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Точка входа командной строки"""
    return FasCli().run(argv)


if __name__ == '__main__':
    sys.exit(main())
