"""Command-line entry point: ``build``, ``embed``, ``evaluate``, ``pipeline``.

Exit codes: 0 success, 2 usage or parameter error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import classify
from .data import Cohort, generate_synthetic_cohort, load_cohort, read_matrix, write_matrix
from .errors import HyperconnectomeError, InputError, LoadError, ParameterError
from .hcae import HcaeConfig, subject_seed, train_subject
from .hypergraph import build_hyperconnectome, propagation_operator

log = logging.getLogger("hyperconnectome")

CONFIG_NAME = "config.txt"
STAGES = ("build", "embed", "evaluate")


@dataclass
class RunConfig:
    manifest: str = ""
    synthetic: str = "40,35,4,2,0.8"
    seed: int = 0
    k: int = 5
    hidden_dim: int = 32
    latent_dim: int = 16
    disc_hidden_dims: str = "64,16"
    epochs: int = 30
    lr: float = 0.01
    disc_lr: float = 0.001
    prior: str = "projection"
    recon_weight: float = 1.0
    adv_weight: float = 1.0
    n_runs: int = 100
    train_frac: float = 0.8
    svm_reg: float = 1e-3
    svm_epochs: int = 200
    ablate_views: bool = False
    shuffle_labels: bool = False
    workers: int = 1
    out: str = "hcae_out"

    def hcae_config(self) -> HcaeConfig:
        try:
            disc = tuple(int(x) for x in self.disc_hidden_dims.split(",") if x.strip())
        except ValueError:
            raise ParameterError(f"disc_hidden_dims must be comma-separated integers, got {self.disc_hidden_dims!r}") from None
        return HcaeConfig(
            hidden_dim=self.hidden_dim,
            latent_dim=self.latent_dim,
            disc_hidden_dims=disc,
            epochs=self.epochs,
            lr=self.lr,
            disc_lr=self.disc_lr,
            seed=self.seed,
            k=self.k,
            prior=self.prior,
            recon_weight=self.recon_weight,
            adv_weight=self.adv_weight,
        )

    def synthetic_params(self) -> Tuple[int, int, int, int, float]:
        parts = [p.strip() for p in self.synthetic.split(",")]
        if len(parts) != 5:
            raise ParameterError(
                f"synthetic must be n_subjects,n_nodes,n_views,n_classes,signal; got {self.synthetic!r}"
            )
        try:
            return int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])
        except ValueError:
            raise ParameterError(f"cannot parse synthetic parameters {self.synthetic!r}") from None

    def to_text(self) -> str:
        lines = [f"{f.name} = {_format_value(getattr(self, f.name))}" for f in fields(self)]
        return "\n".join(lines) + "\n"


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(name: str, typ, raw: str):
    raw = raw.strip()
    try:
        if typ is bool or typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int or typ == "int":
            return int(raw)
        if typ is float or typ == "float":
            return float(raw)
    except ValueError:
        raise ParameterError(f"config key {name!r}: cannot parse {raw!r}") from None
    return raw


def read_config_file(path) -> Dict[str, object]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"config file not found: {path}")
    types = {f.name: f.type for f in fields(RunConfig)}
    out: Dict[str, object] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ParameterError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = _coerce(key, types[key], value)
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: Dict[str, object] = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    overrides = {
        "seed": args.seed,
        "k": args.k,
        "epochs": args.epochs,
        "latent_dim": args.latent_dim,
        "n_runs": args.runs,
        "out": args.out,
        "manifest": args.manifest,
        "synthetic": args.synthetic,
        "workers": args.workers,
    }
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    if args.synthetic is not None:
        values["manifest"] = ""
    if args.ablate_views:
        values["ablate_views"] = True
    if args.shuffle_labels:
        values["shuffle_labels"] = True
    return RunConfig(**values)


# --------------------------------------------------------------------------
# stage plumbing
# --------------------------------------------------------------------------


class _Stage:
    """Writes into ``<out>/<name>.partial`` and renames on success, so a
    stage directory only exists once it is complete."""

    def __init__(self, cfg: RunConfig, name: str):
        self.final = Path(cfg.out) / name
        self.tmp = Path(cfg.out) / f"{name}.partial"
        self.cfg = cfg

    def __enter__(self) -> Path:
        if self.tmp.exists():
            shutil.rmtree(self.tmp)
        self.tmp.mkdir(parents=True)
        (self.tmp / CONFIG_NAME).write_text(self.cfg.to_text())
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            return False
        if self.final.exists():
            shutil.rmtree(self.final)
        os.replace(self.tmp, self.final)
        return False


def load_data(cfg: RunConfig) -> Cohort:
    if cfg.manifest:
        return load_cohort(None, cfg.manifest)
    n_subjects, n_nodes, n_views, n_classes, signal = cfg.synthetic_params()
    return generate_synthetic_cohort(n_subjects, n_nodes, n_views, n_classes, signal, cfg.seed)


def _check_k(cfg: RunConfig, cohort: Cohort) -> None:
    if not 1 <= cfg.k <= cohort.n_nodes - 1:
        raise ParameterError(f"k={cfg.k} out of range [1, {cohort.n_nodes - 1}] for N={cohort.n_nodes}")


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_build(cfg: RunConfig) -> int:
    cohort = load_data(cfg)
    _check_k(cfg, cohort)
    with _Stage(cfg, "build") as out:
        rows = []
        for s in cohort.subjects:
            h, _ = build_hyperconnectome(s, cfg.k)
            write_matrix(out / "incidence" / f"{s.subject_id}.txt", h.incidence)
            write_matrix(out / "propagation" / f"{s.subject_id}.txt", propagation_operator(h))
            d = h.vertex_degrees
            rows.append((s.subject_id, d.min(), d.mean(), d.max()))
        with open(out / "summary.txt", "w") as fh:
            fh.write(f"n_subjects = {len(cohort)}\n")
            fh.write(f"n_nodes = {cohort.n_nodes}\n")
            fh.write(f"n_views = {cohort.n_views}\n")
            fh.write(f"k = {cfg.k}\n")
            fh.write(f"edge_degree = {cfg.k + 1}\n")
            fh.write("\n[vertex_degree]  # subject = min mean max\n")
            for sid, lo, mean, hi in rows:
                fh.write(f"{sid} = {lo!r} {mean!r} {hi!r}\n")
    log.info("build: wrote %d hyperconnectomes to %s", len(cohort), Path(cfg.out) / "build")
    return 0


def _train_all(cohort: Cohort, hcfg: HcaeConfig, workers: int):
    """Per-subject training; failures are collected, not raised."""

    def one(item):
        i, s = item
        try:
            _, emb, trace = train_subject(s, hcfg, sample_seed=subject_seed(hcfg.seed, i))
            return emb, trace, None
        except HyperconnectomeError as exc:
            return None, None, f"{s.subject_id}: {exc}"

    return _map(one, list(enumerate(cohort.subjects)), workers)


def _write_embeddings(out: Path, cohort: Cohort, results) -> List[str]:
    failures = []
    with open(out / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "label", "embedding_file", "recon_loss"])
        for s, (emb, trace, err) in zip(cohort.subjects, results):
            if err is not None:
                failures.append(err)
                continue
            rel = f"embeddings/{s.subject_id}.txt"
            write_matrix(out / rel, emb.z)
            (out / "traces").mkdir(exist_ok=True)
            (out / "traces" / f"{s.subject_id}.csv").write_text(trace.to_csv())
            w.writerow([s.subject_id, s.label or "", rel, repr(trace.final_recon_loss)])
    if failures:
        (out / "failures.txt").write_text("\n".join(failures) + "\n")
    return failures


def cmd_embed(cfg: RunConfig) -> int:
    cohort = load_data(cfg)
    _check_k(cfg, cohort)
    hcfg = cfg.hcae_config()
    results = _train_all(cohort, hcfg, cfg.workers)
    with _Stage(cfg, "embed") as out:
        failures = _write_embeddings(out, cohort, results)
    for f in failures:
        print(f"error: training failed for subject {f}", file=sys.stderr)
    log.info("embed: %d/%d subjects embedded", len(cohort) - len(failures), len(cohort))
    return 1 if failures else 0


@dataclass
class _LoadedEmbedding:
    subject_id: str
    z: np.ndarray
    recon_error: float

    @property
    def flattened(self) -> np.ndarray:
        return self.z.reshape(-1)


def read_embedding_index(embed_dir) -> Tuple[List[_LoadedEmbedding], List[str]]:
    embed_dir = Path(embed_dir)
    index = embed_dir / "index.csv"
    if not index.is_file():
        raise LoadError(f"embeddings not found: {index}")
    embs, labels = [], []
    with open(index, newline="") as fh:
        for row in csv.DictReader(fh):
            z = read_matrix(embed_dir / row["embedding_file"])
            embs.append(_LoadedEmbedding(row["subject_id"], z, float(row["recon_loss"])))
            labels.append(row["label"])
    if not embs:
        raise LoadError(f"no embeddings listed in {index}")
    return embs, labels


def _labels_for_eval(labels: Sequence[str], cfg: RunConfig) -> List[str]:
    labels = list(labels)
    if cfg.shuffle_labels:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EED]))
        labels = [labels[i] for i in rng.permutation(len(labels))]
    return labels


def _evaluate(embs, labels, cfg: RunConfig) -> classify.EvalReport:
    echo = {"k": cfg.k, "hidden_dim": cfg.hidden_dim, "latent_dim": cfg.latent_dim,
            "epochs": cfg.epochs, "seed_policy": "subject=hash(seed,index);run=hash(seed,run)"}
    return classify.evaluate_protocol(
        embs, labels, n_runs=cfg.n_runs, train_frac=cfg.train_frac, seed=cfg.seed,
        reg=cfg.svm_reg, svm_epochs=cfg.svm_epochs, workers=cfg.workers, config=echo,
    )


def cmd_evaluate(cfg: RunConfig) -> int:
    embs, labels = read_embedding_index(Path(cfg.out) / "embed")
    labels = _labels_for_eval(labels, cfg)
    report = _evaluate(embs, labels, cfg)
    ablation = None
    if cfg.ablate_views:
        ablation = _ablation(cfg, report, labels)
    with _Stage(cfg, "evaluate") as out:
        (out / "report.txt").write_text(report.to_text())
        (out / "runs.csv").write_text(report.runs_csv())
        if ablation is not None:
            with open(out / "ablation.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["views", "mean_accuracy", "std_accuracy", "mean_recon_error"])
                for name, rep in ablation:
                    w.writerow([name, repr(rep.mean_accuracy), repr(rep.std_accuracy), repr(rep.mean_recon_error)])
    print(f"mean accuracy {report.mean_accuracy:.4f} +/- {report.std_accuracy:.4f} over {report.n_runs} runs")
    return 0


def _ablation(cfg: RunConfig, multi: classify.EvalReport, labels: List[str]):
    """One row per single view, then the multi-view row, same seeds."""
    cohort = load_data(cfg)
    _check_k(cfg, cohort)
    hcfg = cfg.hcae_config()
    rows = []
    for m in range(cohort.n_views):
        results = _train_all(cohort.select_views([m]), hcfg, cfg.workers)
        errors = [err for _, _, err in results if err is not None]
        if errors:
            raise HyperconnectomeError(f"ablation view {m + 1}: {errors[0]}")
        rows.append((f"view_{m + 1}", _evaluate([e for e, _, _ in results], labels, cfg)))
    rows.append(("all", multi))
    return rows


def cmd_pipeline(cfg: RunConfig) -> int:
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    (Path(cfg.out) / CONFIG_NAME).write_text(cfg.to_text())
    for stage in (cmd_build, cmd_embed, cmd_evaluate):
        code = stage(cfg)
        if code != 0:
            return code
    return 0


COMMANDS = {"build": cmd_build, "embed": cmd_embed, "evaluate": cmd_evaluate, "pipeline": cmd_pipeline}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hyperconnectome", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--k", type=int)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--latent-dim", dest="latent_dim", type=int)
        sp.add_argument("--runs", type=int)
        sp.add_argument("--out")
        sp.add_argument("--manifest", help="cohort manifest (overrides synthetic data)")
        sp.add_argument("--synthetic", metavar="N_SUBJECTS,N_NODES,N_VIEWS,N_CLASSES,SIGNAL")
        sp.add_argument("--ablate-views", dest="ablate_views", action="store_true")
        sp.add_argument("--shuffle-labels", dest="shuffle_labels", action="store_true")
        sp.add_argument("--workers", type=int)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        cfg.hcae_config()
        return COMMANDS[args.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HyperconnectomeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
