"""``condiv`` command line: dataset generation, training, evaluation and exports.

Settings resolve as defaults < ``--config`` file < ``CONDIV_SEED`` < flags.
Every subcommand writes ``resolved.cfg`` into ``--out``.  Exit codes: 0 on
success, 1 on usage or config errors, 2 on runtime failures.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .checkpoint import CheckpointError
from .config import ConfigError, TrainConfig, augment_spec, build_config, dump_config, \
    format_value, known_keys, parse_config_text
from .data import Dataset, DatasetFormatError, gen_gaussian_clusters, gen_toy_shapes, \
    read_dataset, write_dataset
from .experiments import ablate_augmentations, export_divergence_grid, export_embeddings, \
    gradient_suite, rows_to_csv, sweep_kappa
from .model import ContrastiveDivergenceModel, load_encoder, load_model, save_model
from .tensor import TensorError
from .train import TrainingError, fit, linear_eval, save_training_checkpoint

ENV_SEED = "CONDIV_SEED"
SUBCOMMANDS = ("gen-data", "train", "eval-linear", "sweep-kappa", "ablate-aug",
               "export-divergence", "export-embeddings", "grad-check")
GEN_ALIASES = {"kind": "data.kind", "k": "data.k", "n-per": "data.n_per", "dim": "data.dim",
               "stddev": "data.stddev", "size": "data.size", "seed": "data.seed"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        if action.default is None:
            return action.help
        return super()._get_help_string(action)


def _key_defaults() -> dict[str, str]:
    defaults = {k: format_value(v) for k, (v, _) in known_keys().items()}
    for k in defaults:
        if k.startswith("augment.") and k != "augment.preset":
            defaults[k] = "from preset"
    return defaults


def _add_config_flags(p: argparse.ArgumentParser, aliases: dict[str, str]) -> None:
    defaults = _key_defaults()
    g = p.add_argument_group("config keys")
    taken = set(aliases)
    for key in sorted(defaults):
        if key in taken:
            continue
        g.add_argument(f"--{key}", dest=f"key:{key}", metavar="V", default=argparse.SUPPRESS,
                       help=f"(default: {defaults[key]})")
    for alias, key in aliases.items():
        g.add_argument(f"--{alias}", dest=f"key:{key}", metavar="V", default=argparse.SUPPRESS,
                       help=f"alias of {key} (default: {defaults[key]})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="condiv", description="Contrastive divergence learning toolkit.",
                     allow_abbrev=False, formatter_class=_HelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text, aliases=None, data=True, checkpoint=False):
        p = sub.add_parser(name, help=help_text, description=help_text, allow_abbrev=False,
                           formatter_class=_HelpFormatter)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", default="out", help="output directory")
        if data:
            p.add_argument("--data", help="CDL1 dataset file (default: generate from data.* keys)")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="checkpoint file")
        _add_config_flags(p, aliases or {})
        return p

    command("gen-data", "Generate a synthetic dataset as data.cdl.", GEN_ALIASES, data=False)
    train = command("train", "Train a model; writes log.csv, checkpoint.ckpt and encoder.ckpt.")
    train.add_argument("--resume", help="full checkpoint to continue from")
    command("eval-linear", "Linear probe on a frozen encoder; writes eval.csv.", checkpoint=True)
    sweep = command("sweep-kappa", "Train and probe one model per kappa; writes sweep.csv.")
    sweep.add_argument("--kappas", default="5,20,100", help="comma-separated kappa values")
    abl = command("ablate-aug", "Remove one augmentation stage per run; writes ablation.csv.")
    abl.add_argument("--stages", default="", help="comma-separated stages to remove")
    div = command("export-divergence", "Deep divergence to an anchor over a 2-D grid; writes divergence.csv.",
                  data=False, checkpoint=True)
    div.add_argument("--anchor", required=True, help="comma-separated anchor coordinates")
    div.add_argument("--x-range", default="0,1", help="lo,hi")
    div.add_argument("--y-range", default="0,1", help="lo,hi")
    div.add_argument("--resolution", type=int, default=50, help="grid points per axis")
    div.add_argument("--dims", default="0,1", help="input coordinates spanned by the grid")
    emb = command("export-embeddings", "Encoder or projection outputs as embeddings.csv.", checkpoint=True)
    emb.add_argument("--which", choices=("encoder", "projection"), default="encoder")
    command("grad-check", "Finite-difference check of every loss; writes gradcheck.csv.", data=False)
    return parser


def resolve_config(args: argparse.Namespace, env: dict | None = None) -> TrainConfig:
    env = os.environ if env is None else env
    cfg = TrainConfig()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as err:
            raise UsageError(f"cannot read config: {err}") from None
        cfg = build_config(parse_config_text(text), cfg)
    flags = {k[len("key:"):]: (v, None) for k, v in vars(args).items()
             if k.startswith("key:")}
    seed_key = "data.seed" if args.command == "gen-data" else "seed"
    if seed_key not in flags and env.get(ENV_SEED):
        cfg = build_config({seed_key: (env[ENV_SEED], None)}, cfg)
    return build_config(flags, cfg)


def _floats(raw: str, name: str, count: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated numbers, got {raw!r}") from None
    if count is not None and len(vals) != count:
        raise UsageError(f"--{name}: expected {count} values, got {len(vals)}")
    return vals


def make_dataset(cfg: TrainConfig) -> Dataset:
    d = cfg.data
    if d.kind == "shapes":
        return gen_toy_shapes(d.n_per, d.size, seed=d.seed)
    return gen_gaussian_clusters(d.k, d.n_per, d.dim, stddev=d.stddev, seed=d.seed)


def load_data(args, cfg: TrainConfig) -> Dataset:
    path = getattr(args, "data", None) or cfg.data.path
    return read_dataset(path) if path else make_dataset(cfg)


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)


def run(args: argparse.Namespace, cfg: TrainConfig, out: Path) -> int:
    cmd = args.command
    resolved = None
    if cmd == "gen-data":
        write_dataset(make_dataset(cfg), out / "data.cdl")
    elif cmd == "train":
        data = load_data(args, cfg)
        resolved = augment_spec(cfg, data.is_vector)
        model = ContrastiveDivergenceModel.from_config(data.input_dim, cfg)
        ckpt = out / "checkpoint.ckpt"
        tlog = fit(model, data, cfg, checkpoint_path=ckpt, resume=args.resume)
        _write(out, "log.csv", tlog.to_csv())
        save_training_checkpoint(ckpt, model, cfg, tlog)
        save_model(out / "encoder.ckpt", model, cfg, encoder_only=True)
    elif cmd == "eval-linear":
        encoder, _ = load_encoder(args.checkpoint)
        rep = linear_eval(encoder, load_data(args, cfg), cfg.probe)
        rows = [("top1", rep.top1), *((f"top{k}", v) for k, v in rep.topk.items()),
                ("train_top1", rep.train_top1), ("n_train", rep.n_train), ("n_test", rep.n_test)]
        _write(out, "eval.csv", rows_to_csv(("metric", "value"), rows))
        print(f"top-1 {rep.top1:.4f}")
    elif cmd == "sweep-kappa":
        try:
            kappas = [int(k) for k in args.kappas.split(",") if k.strip()]
        except ValueError:
            raise UsageError(f"--kappas: expected comma-separated integers, got {args.kappas!r}") from None
        rows = sweep_kappa(load_data(args, cfg), cfg, kappas)
        _write(out, "sweep.csv", rows_to_csv(("kappa", "top1"), rows))
    elif cmd == "ablate-aug":
        data = load_data(args, cfg)
        resolved = augment_spec(cfg, data.is_vector)
        stages = [s.strip() for s in args.stages.split(",") if s.strip()]
        rows = ablate_augmentations(data, cfg, stages)
        _write(out, "ablation.csv", rows_to_csv(("stage", "top1", "delta"), rows))
    elif cmd == "export-divergence":
        model, _, _ = load_model(args.checkpoint)
        dims = [int(v) for v in _floats(args.dims, "dims", 2)]
        rows = export_divergence_grid(model, _floats(args.anchor, "anchor"),
                                      _floats(args.x_range, "x-range", 2), _floats(args.y_range, "y-range", 2),
                                      args.resolution, dims)
        _write(out, "divergence.csv", rows_to_csv(("x", "y", "d"), rows))
    elif cmd == "export-embeddings":
        if args.which == "projection":
            source = load_model(args.checkpoint)[0]
        else:
            source = load_encoder(args.checkpoint)[0]
        _write(out, "embeddings.csv", export_embeddings(source, load_data(args, cfg), args.which))
    elif cmd == "grad-check":
        reports = gradient_suite(seed=cfg.seed, kernel_kind=cfg.kernel.kind)
        rows = [(name, r.max_rel_error, r.checked, len(r.failures)) for name, r in reports.items()]
        _write(out, "gradcheck.csv", rows_to_csv(("loss", "max_rel_error", "checked", "failures"), rows))
        for name, r in reports.items():
            print(f"{name}: max relative error {r.max_rel_error:.3e} over {r.checked} entries "
                  f"({'ok' if r.ok else 'FAILED'})")
        _write(out, "resolved.cfg", dump_config(cfg))
        return 0 if all(r.ok for r in reports.values()) else 2
    _write(out, "resolved.cfg", dump_config(cfg, resolved))
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
    except (UsageError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except SystemExit as stop:  # --help
        return int(stop.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return run(args, cfg, out)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (OSError, ValueError, TensorError, TrainingError, CheckpointError, DatasetFormatError,
            KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
