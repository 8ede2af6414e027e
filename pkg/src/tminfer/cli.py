"""tminfer command line: fetch, inspect, classify, stream, serve."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import fetch as fetch_mod
from . import graph, session
from .errors import TminferError
from .session import Prediction, format_result
from .vision import decode_image, preprocess

click.UsageError.exit_code = 64  # conventional EX_USAGE

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FATAL = 2


def _cache_dir_option(f):
    return click.option("--cache-dir", type=click.Path(path_type=Path),
                        default=None, envvar="TMINFER_CACHE_DIR",
                        help="Bundle cache directory.")(f)


def _open_bundle(model_ref: str, cache_dir):
    return fetch_mod.open_model_ref(model_ref, cache_dir=cache_dir)


def _predictions(labels, probs, top_k: int | None):
    preds = [Prediction(label, float(p)) for label, p in zip(labels, probs)]
    if top_k is not None and top_k < len(preds):
        # stable sort keeps label order among ties
        preds = sorted(preds, key=lambda p: -p.probability)[:top_k]
    return preds


@click.group()
@click.version_option()
def main():
    """Load Teachable Machine image-model bundles and classify images."""


@main.command("fetch")
@_cache_dir_option
@click.argument("model_ref")
def cmd_fetch(model_ref, cache_dir):
    """Download a model bundle into the local cache."""
    if not model_ref.startswith(("http://", "https://")):
        try:
            _open_bundle(model_ref, cache_dir)
        except (TminferError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_FATAL)
        click.echo(f"local bundle ok: {model_ref}")
        return
    try:
        locator = fetch_mod.resolve(model_ref)
    except TminferError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FATAL)
    cache = Path(cache_dir) if cache_dir else fetch_mod.default_cache_dir()
    entry = cache / fetch_mod.cache_key(locator.base)
    hit = fetch_mod._entry_complete(entry)
    try:
        fetch_mod.fetch_bundle(locator, cache)
    except (TminferError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FATAL)
    click.echo(f"model:    {locator.model_url}")
    click.echo(f"metadata: {locator.metadata_url}")
    total = sum(f.stat().st_size for f in entry.iterdir() if f.is_file())
    click.echo(f"cached {total} bytes in {entry}" + (" (cache hit)" if hit else ""))


@main.command("inspect")
@_cache_dir_option
@click.option("--format", "fmt", type=click.Choice(["json", "table"]),
              default="table")
@click.argument("model_ref")
def cmd_inspect(model_ref, cache_dir, fmt):
    """Print bundle metadata and the compiled layer summary."""
    try:
        bundle = _open_bundle(model_ref, cache_dir)
        plan = graph.build_plan(bundle)
    except (TminferError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FATAL)
    md = bundle.metadata
    if fmt == "json":
        click.echo(json.dumps({
            "modelName": md.model_name,
            "labels": list(md.labels),
            "imageSize": md.image_size,
            "libraryVersions": md.library_versions,
            "totalParams": sum(n.param_count for n in plan.nodes),
            "nodes": [{"kind": n.kind, "name": n.name,
                       "outputShape": list(n.out_shape),
                       "params": n.param_count}
                      for n in plan.nodes],
        }, indent=2))
        return
    click.echo(f"model:      {md.model_name}")
    click.echo(f"image size: {md.image_size}")
    click.echo(f"labels:     {', '.join(md.labels)}")
    for k, v in sorted(md.library_versions.items()):
        click.echo(f"  {k}: {v}")
    click.echo(graph.summarize(plan), nl=False)


def _emit_classification(path: str, preds, fmt: str):
    if fmt == "json":
        return {"path": path,
                "predictions": json.loads(format_result(preds))}
    if fmt == "csv":
        return "\n".join(f"{path},{json.dumps(p.label)},{p.probability:.6f}"
                         for p in preds)
    width = max(len(p.label) for p in preds)
    lines = [path] + [f"  {p.label:<{width}}  {p.probability:.6f}" for p in preds]
    return "\n".join(lines)


@main.command("classify")
@_cache_dir_option
@click.option("--top-k", type=click.IntRange(min=1), default=None,
              help="Keep only the k most probable classes.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "table"]),
              default="table")
@click.argument("model_ref")
@click.argument("paths", nargs=-1, type=click.Path(path_type=Path))
def cmd_classify(model_ref, cache_dir, top_k, fmt, paths):
    """Classify one or more image files."""
    if not paths:
        raise click.UsageError("at least one image path is required")
    try:
        bundle = _open_bundle(model_ref, cache_dir)
        plan = graph.build_plan(bundle)
    except (TminferError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FATAL)
    skipped = 0
    rows = []
    if fmt == "csv":
        click.echo("path,label,probability")
    for path in paths:
        try:
            frame = decode_image(Path(path).read_bytes())
            probs = graph.run(plan, preprocess(frame, bundle.metadata.image_size))
        except (TminferError, OSError) as exc:
            click.echo(f"skipping {path}: {exc}", err=True)
            skipped += 1
            continue
        preds = _predictions(plan.output_labels, probs, top_k)
        out = _emit_classification(str(path), preds, fmt)
        if fmt == "json":
            rows.append(out)
        else:
            click.echo(out)
    if fmt == "json":
        click.echo(json.dumps(rows, indent=2))
    sys.exit(EXIT_PARTIAL if skipped else EXIT_OK)


class _DirectorySource:
    """Serves frames decoded from a queue of image files."""

    def __init__(self):
        self.frame = None

    def current_frame(self):
        return self.frame


@main.command("stream")
@_cache_dir_option
@click.argument("model_ref")
@click.argument("source", required=True)
def cmd_stream(model_ref, cache_dir, source):
    """Classify a frame sequence: a directory of images, or '-' to read
    newline-separated image paths from stdin."""
    sess = session.new_session(session.SessionConfig(
        model_url=model_ref if "://" in model_ref else f"file://{model_ref}",
        cache_dir=str(cache_dir) if cache_dir else None,
        loader=lambda _url: _open_bundle(model_ref, cache_dir),
    ))
    src = _DirectorySource()
    sess.attach_source(src)
    sess.load()
    events = sess.poll()
    if events and events[0].kind == "load_error":
        click.echo(f"error: {events[0].reason}", err=True)
        sys.exit(EXIT_FATAL)

    if source == "-":
        frame_paths = (Path(line.strip()) for line in sys.stdin if line.strip())
    else:
        src_dir = Path(source)
        if not src_dir.is_dir():
            raise click.UsageError(f"{source} is not a directory")
        frame_paths = iter(sorted(
            p for p in src_dir.iterdir()
            if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        ))
    try:
        for path in frame_paths:
            try:
                src.frame = decode_image(path.read_bytes(), source_id=str(path))
            except (TminferError, OSError) as exc:
                click.echo(f"skipping {path}: {exc}", err=True)
                continue
            sess.classify_frame()
            for event in sess.poll():
                if event.kind == "got_classification":
                    click.echo(json.dumps({
                        "frame": path.name,
                        "predictions": json.loads(
                            format_result(event.predictions)),
                    }))
                elif event.kind == "classification_error":
                    click.echo(f"frame {path.name} failed: {event.reason}",
                               err=True)
    except KeyboardInterrupt:
        pass
    finally:
        sess.stop()
    sys.exit(EXIT_OK)


@main.command("serve")
@_cache_dir_option
@click.option("--port", type=click.IntRange(1, 65535), default=8000)
@click.option("--host", default="127.0.0.1")
@click.argument("model_ref")
def cmd_serve(model_ref, cache_dir, port, host):
    """Serve classification over HTTP (GET /healthz, /metadata; POST /classify)."""
    import uvicorn

    from .service import create_app

    try:
        bundle = _open_bundle(model_ref, cache_dir)
        app = create_app(bundle)
    except (TminferError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FATAL)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FATAL)


if __name__ == "__main__":
    main()
