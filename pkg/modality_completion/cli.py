"""
Command line interface ``mcdbn``.

    mcdbn synth     --config C [--out DIR]
    mcdbn impute    --method M [--in DIR] [--out DIR] [--model CKPT]
    mcdbn train     --config C [--out DIR]
    mcdbn evaluate  --config C [--model CKPT] [--threads N] [--out DIR]
    mcdbn ablate    --which loss|decoder --config C [--threads N] [--out DIR]
    mcdbn gradcheck

Omitted directories come from the ``paths`` section of the configuration:
synth writes to ``data_dir``, impute reads ``data_dir/instrument_00`` and
writes ``out_dir/imputed``, train writes to ``out_dir``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical divergence. Errors go to standard error as
``ERROR:<category>:<message>``.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, model_from_tensors, model_tensors, save_checkpoint
from .config import canonical_json, config_hash, load_config
from .data import apply_missingness, impute_baseline, missingness_rng, read_dataset, synth_instrument, write_dataset
from .errors import DataError, McdbnError, UsageError
from .evaluation import ablation_run, benchmark_run
from .numerics import Rng
from .training import complete_dataset, gradient_suite, trace_frame, train_mcdbn

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

LOG_FORMAT = '%(asctime)s %(name)-12s %(levelname)-8s %(message)s'


class ArgumentParser(argparse.ArgumentParser):
    """Reports bad command lines as UsageError instead of exiting"""

    def error(self, message):
        raise UsageError(f'{message}\n{self.format_usage().rstrip()}')


def build_parser():
    parser = ArgumentParser(prog='mcdbn', description='Multimodal completion with deep belief networks')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    level = parser.add_mutually_exclusive_group()
    level.add_argument('--verbose', action='store_true', help='debug logging')
    level.add_argument('--quiet', action='store_true', help='warnings and errors only')
    sub = parser.add_subparsers(dest='command', metavar='command', parser_class=ArgumentParser)
    sub.required = True

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument('--config', type=Path, help='JSON configuration (defaults when omitted)')
        p.add_argument('--seed', type=int, help='master seed, overrides MCDBN_SEED and the config')
        return p

    p = command('synth', 'write seeded synthetic datasets')
    p.add_argument('--out', type=Path, help='output directory (default: paths.data_dir)')

    p = command('impute', 'complete a dataset directory')
    p.add_argument('--method', required=True, help='zero, locf, nocb, mean, interp, rolling(w) or mcdbn')
    p.add_argument('--in', dest='input', type=Path, help='dataset directory (default: paths.data_dir/instrument_00)')
    p.add_argument('--out', type=Path, help='output directory (default: paths.out_dir/imputed)')
    p.add_argument('--model', type=Path, help='checkpoint for --method mcdbn')

    p = command('train', 'pretrain and fine-tune a model')
    p.add_argument('--out', type=Path, help='model directory (default: paths.out_dir)')
    p.add_argument('--data', type=Path, help='dataset directory (default: synthetic instrument)')
    p.add_argument('--instrument', type=int, default=0)

    p = command('evaluate', 'compare completion methods on the synthetic benchmark')
    p.add_argument('--model', type=Path, help='use this checkpoint for mcdbn instead of training')
    p.add_argument('--threads', type=int)
    p.add_argument('--out', type=Path)

    p = command('ablate', 'loss or decoder ablation grid')
    p.add_argument('--which', choices=('loss', 'decoder'), required=True)
    p.add_argument('--threads', type=int)
    p.add_argument('--out', type=Path)

    p = sub.add_parser('gradcheck', help='finite-difference check of every gradient')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--h', type=float, default=1e-5)
    p.add_argument('--tolerance', type=float, default=1e-4)
    return parser


def _threads(args, cfg):
    threads = args.threads if args.threads is not None else cfg.threads
    if threads < 1:
        raise UsageError(f'--threads must be at least 1, got {threads}')
    return threads


def _out_dir(args, cfg, *parts):
    return args.out if args.out is not None else Path(cfg.paths.out_dir, *parts)


def _load_model(path, cfg):
    model, scalers, train_cfg, _ = model_from_tensors(load_checkpoint(path), cfg.train)
    return model, scalers, train_cfg


def cmd_synth(args, env):
    cfg = load_config(args.config, args.seed, env)
    spec = cfg.synthetic
    out = args.out if args.out is not None else Path(cfg.paths.data_dir)
    for i in range(spec.instruments):
        truth = synth_instrument(spec, i)
        corrupted = apply_missingness(truth, cfg.missingness, missingness_rng(cfg.missingness, i, spec.instruments))
        write_dataset(corrupted, out / truth.name)
        print(out / truth.name)
    (out / 'config.json').write_text(canonical_json(cfg) + '\n', encoding='utf-8')
    return 0


def cmd_impute(args, env):
    cfg = load_config(args.config, args.seed, env)
    source = args.input if args.input is not None else Path(cfg.paths.data_dir, 'instrument_00')
    data = read_dataset(source, cfg.synthetic.target_column)
    if args.method == 'mcdbn':
        if args.model is None:
            raise UsageError('--method mcdbn needs --model')
        model, scalers, train_cfg = _load_model(args.model, cfg)
        if (model.completion.d_x, model.completion.d_y) != (data.d_x, data.d_y):
            raise DataError(f'checkpoint expects {model.completion.d_x}+{model.completion.d_y} columns, '
                            f'dataset has {data.d_x}+{data.d_y}')
        completed = complete_dataset(model, data, scalers, train_cfg, Rng(cfg.seed))
    else:
        completed = impute_baseline(data, args.method)
    out = _out_dir(args, cfg, 'imputed')
    write_dataset(completed, out)
    print(out)
    return 0


def cmd_train(args, env):
    cfg = load_config(args.config, args.seed, env)
    spec = cfg.synthetic
    train_cfg = cfg.train
    if args.data is not None:
        data = read_dataset(args.data, spec.target_column)
    else:
        if not 0 <= args.instrument < spec.instruments:
            raise UsageError(f'--instrument must lie in 0..{spec.instruments - 1}')
        data = apply_missingness(synth_instrument(spec, args.instrument), cfg.missingness,
                                 missingness_rng(cfg.missingness, args.instrument, spec.instruments))
        if train_cfg.task == 'classification':
            train_cfg = replace(train_cfg, n_classes=spec.n_classes)
    model, scalers, trace = train_mcdbn(data, train_cfg)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model_tensors(model, scalers, train_cfg, data.target_column), out / 'model.mcdb')
    trace_frame(trace).to_csv(out / 'loss_trace.csv', index=False, float_format='%.10g')
    (out / 'config.json').write_text(canonical_json(cfg) + '\n', encoding='utf-8')
    print(out / 'model.mcdb')
    return 0


def cmd_evaluate(args, env):
    cfg = load_config(args.config, args.seed, env)
    train_cfg, model = cfg.train, None
    if args.model is not None:
        trained, scalers, train_cfg = _load_model(args.model, cfg)
        model = (trained, scalers)
    result = benchmark_run(cfg.methods, cfg.synthetic, train_cfg, cfg.missingness, _threads(args, cfg), model,
                           config_hash(cfg))
    sys.stdout.write(result.to_json())
    if args.out is not None:
        result.write(args.out)
    return 0


def cmd_ablate(args, env):
    cfg = load_config(args.config, args.seed, env)
    result = ablation_run(args.which, cfg.synthetic, cfg.train, cfg.missingness, _threads(args, cfg),
                          config_hash(cfg))
    sys.stdout.write(result.to_csv())
    if args.out is not None:
        result.write(args.out, stem=f'ablation_{args.which}')
    return 0


def cmd_gradcheck(args, env):
    results = gradient_suite(args.seed, args.h)
    for name, error in results.items():
        print(f'{name},{error:.3e}')
    worst = max(results, key=results.get)
    if results[worst] > args.tolerance:
        print(f'ERROR:divergence:gradient check {worst} failed with relative error '
              f'{results[worst]:.3e} > {args.tolerance:g}', file=sys.stderr)
        return 3
    return 0


COMMANDS = {
    'synth': cmd_synth,
    'impute': cmd_impute,
    'train': cmd_train,
    'evaluate': cmd_evaluate,
    'ablate': cmd_ablate,
    'gradcheck': cmd_gradcheck,
}


def configure_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, datefmt='%H:%M:%S', stream=sys.stderr, force=True)
    for name in ('modality_completion.training', 'modality_completion.evaluation', 'modality_completion.cli'):
        logging.getLogger(name).setLevel(level)


def dispatch(argv=None, env=None):
    """Run one subcommand and return its exit code"""
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.verbose, args.quiet)
        return COMMANDS[args.command](args, env)
    except McdbnError as e:
        print(f'ERROR:{e.category}:{e}', file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        return e.code or 0


def main():
    sys.exit(dispatch())


if __name__ == '__main__':
    main()
