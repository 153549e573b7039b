"""Command-line entry point: ``python -m wcnn <command>``.

Commands: gen-data, train, eval, grad-check, inspect-corr.  Every command
reads an optional INI config (``--config``), applies ``--set
section.key=value`` overrides and then ``--seed``; paths in ``[paths]`` are
resolved against ``--out``.

Exit codes: 0 success, 1 usage/config error, 2 runtime or numeric failure.
"""
from __future__ import annotations

import argparse
import configparser
import io
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import gradcheck
from .datagen import (GenConfig, format_float, generate, load_dataset, load_split, save_dataset,
                      save_split, split)
from .evaluation import (correlation_diagnostic, cosine_similarity_matrix, cross_block_diagonal,
                         embed_gallery_probe, evaluate, report_from_similarity, write_matrix_csv,
                         write_roc_csv)
from .linalg import make_rng
from .model import ClassifierParams, FeatureNetParams, MaxoutLayer, ModelParams, ProjectionParams
from .trainer import TrainConfig, train

CHECKPOINT_MAGIC = "wcnn-checkpoint"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Bad config file contents or override; reported as a usage error."""


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class PathsConfig:
    out_dir: str = "."
    dataset: str = "dataset.csv"
    split: str = "split.txt"
    checkpoint: str = "checkpoint.txt"
    log: str = "train_log.jsonl"
    report: str = "report.json"
    roc: str = "roc.csv"
    corr: str = "corr.csv"

    def resolve(self, name: str) -> Path:
        p = Path(getattr(self, name))
        return p if p.is_absolute() else Path(self.out_dir) / p


@dataclass(frozen=True)
class EvalOptions:
    write_corr: bool = False
    gallery_as_probe: bool = False


@dataclass(frozen=True)
class GradCheckOptions:
    mutation: str = "none"
    quick: bool = False
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    datagen: GenConfig = field(default_factory=GenConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    eval: EvalOptions = field(default_factory=EvalOptions)
    gradcheck: GradCheckOptions = field(default_factory=GradCheckOptions)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, datagen=replace(self.datagen, seed=seed),
                       split=replace(self.split, seed=seed),
                       train=replace(self.train, seed=seed),
                       gradcheck=replace(self.gradcheck, seed=seed))


# --- config text ------------------------------------------------------------
# TrainConfig nests model / weights / w2; they get their own sections.

def _sections(cfg: RunConfig) -> dict[str, object]:
    return {
        "datagen": cfg.datagen, "split": cfg.split, "model": cfg.train.model,
        "train": cfg.train, "weights": cfg.train.weights, "w2": cfg.train.w2,
        "paths": cfg.paths, "eval": cfg.eval, "gradcheck": cfg.gradcheck,
    }


_NESTED = {"model", "weights", "w2"}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def _parse_value(text: str, default, where: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(x) for x in text.split(",") if x.strip())
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {type(default).__name__}") from None


def emit_config(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for name, obj in _sections(cfg).items():
        parser[name] = {f.name: _fmt(getattr(obj, f.name)) for f in fields(obj)
                        if not (name == "train" and f.name in _NESTED)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def parse_config(text: str, overrides: dict[str, str] | None = None) -> RunConfig:
    """INI text (every key optional) plus ``section.key`` overrides -> RunConfig."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    for dotted, value in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        if not parser.has_section(sec):
            parser.add_section(sec)
        parser[sec][key] = value

    defaults = _sections(RunConfig())
    unknown = set(parser.sections()) - defaults.keys()
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    built = {}
    for name, default_obj in defaults.items():
        names = {f.name for f in fields(default_obj)}
        if name == "train":
            names -= _NESTED
        kw = {}
        if parser.has_section(name):
            for key, raw in parser[name].items():
                if key not in names:
                    raise ConfigError(f"[{name}] unknown key {key!r}")
                kw[key] = _parse_value(raw, getattr(default_obj, key), f"[{name}] {key}")
        built[name] = kw
    try:
        model = replace(defaults["model"], **built["model"])
        train_cfg = replace(defaults["train"], model=model,
                            weights=replace(defaults["weights"], **built["weights"]),
                            w2=replace(defaults["w2"], **built["w2"]), **built["train"])
        return RunConfig(
            datagen=replace(defaults["datagen"], **built["datagen"]),
            split=replace(defaults["split"], **built["split"]),
            train=train_cfg,
            paths=replace(defaults["paths"], **built["paths"]),
            eval=replace(defaults["eval"], **built["eval"]),
            gradcheck=replace(defaults["gradcheck"], **built["gradcheck"]))
    except ValueError as e:
        raise ConfigError(str(e)) from None


# --- checkpoints ------------------------------------------------------------

@dataclass
class Checkpoint:
    params: ModelParams
    config: RunConfig
    iteration: int
    version: int = CHECKPOINT_VERSION


def checkpoint_text(ck: Checkpoint) -> str:
    # the snapshot is location independent so identical runs diff clean
    snapshot = replace(ck.config, paths=replace(ck.config.paths, out_dir="."))
    cfg_lines = emit_config(snapshot).splitlines()
    out = [f"{CHECKPOINT_MAGIC} {ck.version}", f"iteration {ck.iteration}",
           f"config {len(cfg_lines)}", *cfg_lines]
    arrays = list(ck.params.named_arrays())
    out.append(f"arrays {len(arrays)}")
    for name, a in arrays:
        out.append(f"array {name} " + " ".join(str(n) for n in a.shape))
        for row in np.atleast_2d(a) if a.ndim == 2 else [a]:
            out.append(" ".join(format_float(v) for v in row))
    out.append("end")
    return "\n".join(out) + "\n"


def save_checkpoint(ck: Checkpoint, path) -> None:
    Path(path).write_text(checkpoint_text(ck))


def _params_from_arrays(arrays: dict[str, np.ndarray]) -> ModelParams:
    layers = []
    i = 0
    while f"theta.{i}.w1" in arrays:
        layers.append(MaxoutLayer(*(arrays[f"theta.{i}.{k}"] for k in ("w1", "w2", "b1", "b2"))))
        i += 1
    return ModelParams(FeatureNetParams(layers),
                       ProjectionParams(arrays["w"], arrays["p_n"], arrays["p_v"]),
                       ClassifierParams(arrays["f_n"], arrays["f_v"]))


def load_checkpoint(path) -> Checkpoint:
    lines = Path(path).read_text().splitlines()
    pos = 0

    def take(prefix: str) -> list[str]:
        nonlocal pos
        if pos >= len(lines):
            raise ValueError(f"{path}: truncated checkpoint, expected {prefix!r}")
        parts = lines[pos].split()
        if not parts or parts[0] != prefix:
            raise ValueError(f"{path}: line {pos + 1}: expected {prefix!r}, got {lines[pos][:40]!r}")
        pos += 1
        return parts[1:]

    version = int(take(CHECKPOINT_MAGIC)[0])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: checkpoint version {version}, this build reads {CHECKPOINT_VERSION}")
    iteration = int(take("iteration")[0])
    n_cfg = int(take("config")[0])
    config = parse_config("\n".join(lines[pos:pos + n_cfg]))
    pos += n_cfg
    arrays = {}
    for _ in range(int(take("arrays")[0])):
        name, *shape = take("array")
        shape = tuple(int(s) for s in shape)
        rows = shape[0] if len(shape) == 2 else 1
        values = [float(v) for ln in lines[pos:pos + rows] for v in ln.split()]
        pos += rows
        arrays[name] = np.array(values, dtype=np.float64).reshape(shape)
    take("end")
    return Checkpoint(_params_from_arrays(arrays), config, iteration, version)


# --- commands ---------------------------------------------------------------

def _load_split(cfg: RunConfig):
    ds = load_dataset(cfg.paths.resolve("dataset"))
    return load_split(ds, cfg.paths.resolve("split"))


def cmd_gen_data(cfg: RunConfig) -> int:
    ds = generate(cfg.datagen)
    sp = split(ds, cfg.split.test_fraction, make_rng(cfg.split.seed))
    Path(cfg.paths.out_dir).mkdir(parents=True, exist_ok=True)
    save_dataset(ds, cfg.paths.resolve("dataset"))
    save_split(sp, cfg.paths.resolve("split"))
    print(f"subjects={len(ds.subjects())} samples={len(ds)} "
          f"train_subjects={len(sp.train_subjects)} test_subjects={len(sp.test_subjects)} "
          f"gallery={len(sp.gallery_indices)} probe={len(sp.probe_indices)}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    sp = _load_split(cfg)
    heldout = sp.dataset.subset(sp.heldout_indices)
    Path(cfg.paths.out_dir).mkdir(parents=True, exist_ok=True)
    params, log = train(sp.train, cfg.train, heldout=heldout, log_path=cfg.paths.resolve("log"))
    save_checkpoint(Checkpoint(params, cfg, cfg.train.iterations), cfg.paths.resolve("checkpoint"))
    print(log[-1].to_line())
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    sp = _load_split(cfg)
    ck = load_checkpoint(cfg.paths.resolve("checkpoint"))
    if cfg.eval.gallery_as_probe:
        gallery, _ = embed_gallery_probe(sp, ck.params)
        labels = sp.dataset.subject_ids[sp.gallery_indices]
        report = report_from_similarity(cosine_similarity_matrix(gallery, gallery, labels, labels))
    else:
        report, _ = evaluate(sp, ck.params)
    report.extra["checkpoint_iteration"] = ck.iteration
    Path(cfg.paths.resolve("report")).write_text(report.to_json())
    write_roc_csv(report.roc, cfg.paths.resolve("roc"))
    if cfg.eval.write_corr:
        write_matrix_csv(correlation_diagnostic(ck.params.classifier), cfg.paths.resolve("corr"))
    vr = " ".join(f"vr@{format_float(k)}={v:.4f}" for k, v in report.vr_at_far.items())
    print(f"rank1={report.rank1:.4f} {vr} gallery={report.num_gallery} probe={report.num_probe}")
    return 0


def cmd_grad_check(cfg: RunConfig) -> int:
    opts = cfg.gradcheck
    try:
        results = gradcheck.run_all(opts.seed, opts.mutation, opts.quick)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"gradient check failed: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


def cmd_inspect_corr(cfg: RunConfig) -> int:
    ck = load_checkpoint(cfg.paths.resolve("checkpoint"))
    corr = correlation_diagnostic(ck.params.classifier)
    write_matrix_csv(corr, cfg.paths.resolve("corr"))
    c = corr.shape[0] // 2
    cross = corr[:c, c:]
    off = cross[~np.eye(c, dtype=bool)]
    print(f"classes={c} mean_abs_cross_diag={np.mean(np.abs(cross_block_diagonal(corr))):.6f} "
          f"mean_abs_cross_offdiag={np.mean(np.abs(off)) if off.size else 0.0:.6f}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "grad-check": cmd_grad_check,
    "inspect-corr": cmd_inspect_corr,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="INI config file")
    common.add_argument("--seed", type=int, help="seed for data, split, training and grad-check")
    common.add_argument("--out", type=Path, help="directory that relative paths resolve against")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key (repeatable)")
    parser = _Parser(prog="wcnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    sub.choices["eval"].add_argument("--corr", action="store_true",
                                     help="also write the correlation diagnostic CSV")
    sub.choices["eval"].add_argument("--gallery-as-probe", action="store_true")
    sub.choices["grad-check"].add_argument("--mutation", choices=gradcheck.MUTATIONS)
    sub.choices["grad-check"].add_argument("--quick", action="store_true")
    return parser


def config_from_args(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    text = args.config.read_text() if args.config is not None else ""
    cfg = parse_config(text, overrides)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = replace(cfg, paths=replace(cfg.paths, out_dir=str(args.out)))
    if getattr(args, "corr", False):
        cfg = replace(cfg, eval=replace(cfg.eval, write_corr=True))
    if getattr(args, "gallery_as_probe", False):
        cfg = replace(cfg, eval=replace(cfg.eval, gallery_as_probe=True))
    if getattr(args, "mutation", None):
        cfg = replace(cfg, gradcheck=replace(cfg.gradcheck, mutation=args.mutation))
    if getattr(args, "quick", False):
        cfg = replace(cfg, gradcheck=replace(cfg.gradcheck, quick=True))
    return cfg


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ConfigError, OSError) as e:
        print(f"wcnn: config error: {e}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"wcnn: config error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError, ArithmeticError, AssertionError, RuntimeError) as e:
        print(f"wcnn {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
