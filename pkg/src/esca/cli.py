"""Command-line interface: label, train, summarize, explain, eval, serve."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .abstractor import DecoderConfig
from .corpus import label_corpus, load_corpus
from .encoder import EncoderConfig
from .interaction import ControlSpec
from .pipeline import (
    TrainConfig,
    evaluate_model,
    heatmap_payload,
    load_checkpoint,
    summarize_abstract,
    summarize_extract,
    train,
)


def _load_config_file(path: Path) -> dict:
    if path.suffix == ".json":
        return json.loads(path.read_text())
    if path.suffix == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(path.read_text())
    raise click.ClickException(f"config must be .json or .toml, got {path}")


def _configs_from_file(path) -> tuple[TrainConfig, EncoderConfig, DecoderConfig]:
    raw = _load_config_file(Path(path)) if path else {}
    try:
        return (TrainConfig(**raw.get("train", {})),
                EncoderConfig(**raw.get("encoder", {})),
                DecoderConfig(**raw.get("decoder", {})))
    except (TypeError, ValueError) as exc:
        raise click.ClickException(f"bad config: {exc}") from exc


def _control_from(eps_n: float, eps_r: float) -> ControlSpec | None:
    try:
        return ControlSpec(eps_novelty=eps_n, eps_relevance=eps_r)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc


def _load_model(checkpoint):
    try:
        return load_checkpoint(checkpoint)
    except Exception as exc:
        raise click.ClickException(f"cannot load checkpoint: {exc}") from exc


@click.group()
def main():
    """Explainable select-and-generate summarization."""


@main.command()
@click.argument("corpus", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None,
              help="Label cache path (default: <corpus>.labels.jsonl)")
def label(corpus, out):
    """Compute greedy extractive oracle labels for a corpus."""
    docs = [d for d in load_corpus(corpus) if d.reference]
    if not docs:
        raise click.ClickException(f"{corpus}: no documents with summaries")
    out = out or f"{corpus}.labels.jsonl"
    label_corpus(docs, cache_path=out)
    click.echo(f"labeled {len(docs)} documents -> {out}")


@main.command(name="train")
@click.argument("corpus", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="JSON or TOML config file")
@click.option("--val", "val_path", type=click.Path(exists=True), default=None)
@click.option("--labels", "labels_path", type=click.Path(), default=None)
@click.option("--out", "out_path", type=click.Path(), default="model.ckpt")
@click.option("--max-steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--quiet", is_flag=True, default=False)
def train_cmd(corpus, config_path, val_path, labels_path, out_path,
              max_steps, seed, quiet):
    """Train a model end to end and write a checkpoint."""
    cfg, enc_cfg, dec_cfg = _configs_from_file(config_path)
    if max_steps is not None:
        cfg.max_steps = max_steps
    if seed is not None:
        cfg.seed = seed
    env_seed = os.environ.get("ESCA_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError as exc:
            raise click.ClickException(f"ESCA_SEED must be an int: {exc}")

    def log(step, loss):
        if not quiet and (step % 10 == 0 or step == cfg.max_steps - 1):
            click.echo(f"step {step}: loss {loss:.4f}", err=True)

    try:
        path = train(corpus, cfg, enc_cfg=enc_cfg, dec_cfg=dec_cfg,
                     val_path=val_path, labels_path=labels_path,
                     out_path=out_path, log=log)
    except OSError as exc:
        raise click.ClickException(f"corpus unreadable: {exc}") from exc
    except Exception as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(str(path))


@main.command()
@click.argument("source", type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["extract", "abstract"]),
              default="extract")
@click.option("--k", type=int, default=3, show_default=True)
@click.option("--eps-n", type=float, default=0.0, show_default=True)
@click.option("--eps-r", type=float, default=0.0, show_default=True)
@click.option("--beam", type=int, default=4, show_default=True)
@click.option("--max-len", type=int, default=120, show_default=True)
@click.option("--out", type=click.Path(), default=None,
              help="Write JSONL here instead of stdout")
def summarize(source, checkpoint, mode, k, eps_n, eps_r, beam, max_len, out):
    """Summarize every document in a JSONL corpus (or single-doc file)."""
    model = _load_model(checkpoint)
    control = _control_from(eps_n, eps_r)
    docs = [d for d in load_corpus(source) if d.num_sentences > 0]
    lines = []
    for doc in docs:
        if mode == "extract":
            result = summarize_extract(model, doc, k=k, control=control)
        else:
            result = summarize_abstract(model, doc, k=k, control=control,
                                        beam=beam, max_len=max_len)
        lines.append(json.dumps(result))
    text = "\n".join(lines) + ("\n" if lines else "")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


@main.command()
@click.argument("source", type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--index", type=int, default=0, show_default=True,
              help="Which document of the corpus to explain")
@click.option("--eps-n", type=float, default=0.0, show_default=True)
@click.option("--eps-r", type=float, default=0.0, show_default=True)
@click.option("--out", type=click.Path(), default="heatmap.json",
              show_default=True)
def explain(source, checkpoint, index, eps_n, eps_r, out):
    """Export the interaction-matrix heatmap for one document."""
    model = _load_model(checkpoint)
    control = _control_from(eps_n, eps_r)
    docs = load_corpus(source)
    if not 0 <= index < len(docs):
        raise click.ClickException(
            f"index {index} out of range for {len(docs)} documents")
    payload = heatmap_payload(model, docs[index], control)
    Path(out).write_text(json.dumps(payload))
    click.echo(f"wrote {out} (n={payload['n']})")


@main.command(name="eval")
@click.argument("corpus", type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["extract", "abstract"]),
              default="extract")
@click.option("--k", type=int, default=3, show_default=True)
@click.option("--eps-n", type=float, default=0.0, show_default=True)
@click.option("--eps-r", type=float, default=0.0, show_default=True)
@click.option("--beam", type=int, default=4, show_default=True)
@click.option("--max-len", type=int, default=120, show_default=True)
def eval_cmd(corpus, checkpoint, mode, k, eps_n, eps_r, beam, max_len):
    """Mean ROUGE-1/2/L report over a corpus."""
    model = _load_model(checkpoint)
    control = _control_from(eps_n, eps_r)
    docs = load_corpus(corpus)
    report = evaluate_model(model, docs, mode=mode, k=k, control=control,
                            beam=beam, max_len=max_len)
    click.echo(json.dumps(report, indent=2))


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
def serve(checkpoint, host, port):
    """Serve the HTTP API backing the control panel."""
    from .service import serve as run_service

    _load_model(checkpoint)  # fail fast with a readable error
    run_service(checkpoint, host=host, port=port)


if __name__ == "__main__":
    main()
