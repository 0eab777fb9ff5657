"""Command-line entry points for corpus ingestion, the learning and
practicing phases, evaluation tables, retrieval-range curves, the multimodal
subset, and the HTTP session service.

Without ``--endpoint`` every command runs against the deterministic scripted
roles, which makes the whole pipeline usable offline.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import experiments, synthetic
from .backends import BackendProfile, Backends, HashingEmbedder, OpenAICompatBackend
from .memory import MemoryStores
from .metrics import build_icd_index
from .records import load_corpus, save_corpus, split_dataset, validate_corpus
from .tools import RadiologistTools


def _fail(exc: Exception) -> None:
    doc = {"error": type(exc).__name__, "message": str(exc)}
    click.echo("error: " + json.dumps(doc, ensure_ascii=False), err=True)
    sys.exit(1)


def _load_records(corpus: str):
    if corpus == "synthetic":
        return synthetic.make_corpus(16)
    return load_corpus(corpus)


def _build_backends(records, endpoint, model, language):
    if not endpoint:
        return synthetic.scripted_backends(records, language)
    profiles = {
        role: BackendProfile(name=role, endpoint=endpoint, model_id=model)
        for role in synthetic.ROLE_NAMES
    }
    return Backends(profiles, OpenAICompatBackend(), HashingEmbedder())


def _validate_range(ctx, param, value):
    values = value if isinstance(value, tuple) else (value,)
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise click.BadParameter(f"retrieval range {v} outside [0, 1]")
    return value


_shared = [
    click.option("--corpus", default="synthetic", show_default=True,
                 help="Corpus directory/file, or 'synthetic'."),
    click.option("--language", default="en", type=click.Choice(["en", "zh"]),
                 show_default=True),
    click.option("--endpoint", default=None,
                 help="OpenAI-compatible chat endpoint (omit for scripted roles)."),
    click.option("--model", default="gpt-3.5-turbo", show_default=True),
    click.option("--turn-cap", default=20, show_default=True),
]


def shared_options(fn):
    for option in reversed(_shared):
        fn = option(fn)
    return fn


@click.group()
def main():
    """Multi-agent clinical training copilot."""


@main.command()
@click.argument("src")
@click.argument("dest")
def ingest(src, dest):
    """Validate a corpus at SRC and write it normalized under DEST."""
    try:
        records = load_corpus(src)
        violations = validate_corpus(records)
        if violations:
            raise ValueError("; ".join(violations))
        save_corpus(records, dest)
    except Exception as exc:
        _fail(exc)
    click.echo(f"ingested {len(records)} records into {dest}")


@main.command()
@click.argument("src")
@click.option("--seed", default=0, show_default=True)
@click.option("--train-fraction", default=0.5, show_default=True)
def split(src, seed, train_fraction):
    """Report a seeded per-department train/test split of the corpus at SRC."""
    try:
        records = load_corpus(src)
        result = split_dataset(records, seed=seed, train_fraction=train_fraction)
    except Exception as exc:
        _fail(exc)
    click.echo(json.dumps({"train": len(result.train), "test": len(result.test)}))


@main.command()
@shared_options
@click.option("--run-dir", required=True)
@click.option("--strict", is_flag=True)
def learn(corpus, language, endpoint, model, turn_cap, run_dir, strict):
    """Run the learning phase and checkpoint memory after every case."""
    try:
        records = _load_records(corpus)
        backends = _build_backends(records, endpoint, model, language)
        tools = RadiologistTools(backends, language)
        memory = MemoryStores(backends.embedder)
        summary = experiments.run_learning_phase(
            records, memory, backends, tools, run_dir, language, turn_cap,
            strict=strict)
    except Exception as exc:
        _fail(exc)
    click.echo(json.dumps(summary, ensure_ascii=False))


@main.command()
@shared_options
@click.option("--run-dir", required=True)
@click.option("--memory", "memory_path", required=True,
              help="Memory snapshot produced by the learn command.")
@click.option("--icd", "icd_path", required=True, help="ICD terminology CSV.")
@click.option("--strategy", default="knowledge", show_default=True,
              type=click.Choice(["knowledge", "suggestion", "discussion"]))
@click.option("--range", "retrieval_range", default=1.0, show_default=True,
              callback=_validate_range)
def practice(corpus, language, endpoint, model, turn_cap, run_dir, memory_path,
             icd_path, strategy, retrieval_range):
    """Run the practicing phase with one strategy and retrieval range."""
    try:
        records = _load_records(corpus)
        backends = _build_backends(records, endpoint, model, language)
        tools = RadiologistTools(backends, language)
        memory = MemoryStores(backends.embedder)
        memory.restore(memory_path)
        index = build_icd_index(icd_path, backends.embedder)
        row = experiments.run_practicing_phase(
            records, memory, strategy, retrieval_range, backends, tools,
            index, run_dir, language, turn_cap)
        experiments.emit_results([row], Path(run_dir) / "results")
    except Exception as exc:
        _fail(exc)
    click.echo(f"{row.label}: HDE {row.hde.avg:.3f} ({row.hde.std:.3f}), "
               f"F1 {row.sema.f1:.2f}")


@main.command("eval")
@shared_options
@click.option("--run-dir", required=True)
@click.option("--memory", "memory_path", required=True)
@click.option("--icd", "icd_path", required=True)
def eval_cmd(corpus, language, endpoint, model, turn_cap, run_dir, memory_path,
             icd_path):
    """All three practicing strategies at full range, tabulated."""
    try:
        records = _load_records(corpus)
        backends = _build_backends(records, endpoint, model, language)
        tools = RadiologistTools(backends, language)
        memory = MemoryStores(backends.embedder)
        memory.restore(memory_path)
        index = build_icd_index(icd_path, backends.embedder)
        rows = [
            experiments.run_practicing_phase(
                records, memory, strategy, 1.0, backends, tools, index,
                Path(run_dir) / strategy, language, turn_cap)
            for strategy in ("knowledge", "suggestion", "discussion")
        ]
        hde_path, icd_out = experiments.emit_results(rows, Path(run_dir) / "results")
    except Exception as exc:
        _fail(exc)
    click.echo(f"wrote {hde_path} and {icd_out}")


@main.command()
@shared_options
@click.option("--run-dir", required=True)
@click.option("--memory", "memory_path", required=True)
@click.option("--icd", "icd_path", required=True)
@click.option("--strategy", default="knowledge", show_default=True,
              type=click.Choice(["knowledge", "suggestion", "discussion"]))
@click.option("--ranges", default="0,0.25,0.5,0.75,1", show_default=True)
def curve(corpus, language, endpoint, model, turn_cap, run_dir, memory_path,
          icd_path, strategy, ranges):
    """Practicing runs across retrieval ranges, one result row per range."""
    try:
        values = tuple(float(v) for v in ranges.split(","))
        _validate_range(None, None, values)
        records = _load_records(corpus)
        backends = _build_backends(records, endpoint, model, language)
        tools = RadiologistTools(backends, language)
        memory = MemoryStores(backends.embedder)
        memory.restore(memory_path)
        index = build_icd_index(icd_path, backends.embedder)
        rows = experiments.run_range_curve(
            records, memory, strategy, values, backends, tools, index, run_dir,
            language=language, turn_cap=turn_cap)
        hde_path, icd_out = experiments.emit_results(rows, Path(run_dir) / "results")
    except click.BadParameter:
        raise
    except Exception as exc:
        _fail(exc)
    click.echo(f"wrote {hde_path} and {icd_out}")


@main.command()
@shared_options
@click.option("--run-dir", required=True)
@click.option("--icd", "icd_path", required=True)
@click.option("--strict", is_flag=True)
def multimodal(corpus, language, endpoint, model, turn_cap, run_dir, icd_path,
               strict):
    """Plain-student run over the image-bearing subset with vision tools."""
    try:
        if corpus == "synthetic":
            records = synthetic.make_corpus(8, with_attachments=True)
        else:
            records = load_corpus(corpus)
        backends = _build_backends(records, endpoint, model, language)
        tools = RadiologistTools(backends, language)
        memory = MemoryStores(backends.embedder)
        index = build_icd_index(icd_path, backends.embedder)
        row = experiments.run_multimodal_subset(
            records, memory, backends, tools, index, run_dir, language,
            turn_cap, strict=strict)
        experiments.emit_results([row], Path(run_dir) / "results")
    except Exception as exc:
        _fail(exc)
    click.echo(f"{row.label}: HDE {row.hde.avg:.3f}, F1 {row.sema.f1:.2f}")


@main.command()
@shared_options
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--memory", "memory_path", default=None,
              help="Optional memory snapshot to serve recall from.")
@click.option("--state-dir", default=None,
              help="Directory for session transcript logs (enables recovery).")
def serve(corpus, language, endpoint, model, turn_cap, port, host, memory_path,
          state_dir):
    """Serve the /v1 session API."""
    import uvicorn

    from .service import create_app
    try:
        records = _load_records(corpus)
        backends = _build_backends(records, endpoint, model, language)
        tools = RadiologistTools(backends, language)
        memory = MemoryStores(backends.embedder)
        if memory_path:
            memory.restore(memory_path)
        app = create_app(records, backends, tools, memory, language,
                         state_dir=Path(state_dir) if state_dir else None)
    except Exception as exc:
        _fail(exc)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
