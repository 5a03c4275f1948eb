"""Command-line client for the service.

Every subcommand builds a request, posts it to the service (an in-process
app by default, or ``--server URL``), and writes the response payloads to
files.  Exit codes: 0 success, 2 rejected configuration, 1 runtime failure.
"""

from __future__ import annotations

import asyncio
import json
import os
import sys
from pathlib import Path

import click
import httpx

from . import io as dio

_SIMULATE_FILENAMES = {"beta": "stream.csv", "garch": "series.csv", "panel": "panel.csv"}


def _fail(message: str, code: int) -> None:
    click.echo(message, err=True)
    sys.exit(code)


def _post(ctx: click.Context, path: str, payload: dict) -> dict:
    server = ctx.obj.get("server")
    body = dio.dumps_json(payload)
    headers = {"content-type": "application/json"}

    async def go() -> httpx.Response:
        if server is None:
            from .service.app import create_app

            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(transport=transport, base_url="http://driftcal.internal", timeout=None) as client:
                return await client.post(path, content=body, headers=headers)
        async with httpx.AsyncClient(base_url=server, timeout=600.0) as client:
            return await client.post(path, content=body, headers=headers)

    try:
        resp = asyncio.run(go())
    except httpx.HTTPError as exc:
        _fail(f"request failed: {exc}", 1)
    try:
        data = json.loads(resp.text)
    except json.JSONDecodeError:
        _fail(f"malformed response (HTTP {resp.status_code}): {resp.text[:200]}", 1)
    if resp.status_code == 422:
        _fail(f"config rejected: {data.get('detail', data)}", 2)
    if resp.status_code >= 400:
        _fail(f"error: {data.get('detail', data)}", 1)
    return data


def _load_json_file(path: str | None, exit_code: int = 2) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        _fail(f"cannot read {path}: {exc}", exit_code)
    except json.JSONDecodeError as exc:
        _fail(f"{path} is not valid JSON: {exc}", exit_code)
    if not isinstance(raw, dict):
        _fail(f"{path} must hold a JSON object", exit_code)
    return raw


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        _fail(f"cannot read {path}: {exc}", 1)


def _sniff_kind(csv_text: str) -> str:
    first = csv_text.splitlines()[0] if csv_text else ""
    cols = [c.strip() for c in first.split(",")]
    if "unit" in cols:
        return "panel"
    if "beta" in cols:
        return "beta"
    if "score" in cols:
        return "score"
    return "series"


def _prepare_run_payload(config_path: str | None, stream_path: str | None, seed: int | None) -> tuple[dict, str | None]:
    """Split a config file into (request payload, output dir).

    The config may carry ``input`` (stream CSV path), ``output`` (directory)
    and ``segments`` (inline stream synthesis) alongside the learner fields.
    """
    raw = _load_json_file(config_path)
    input_path = raw.pop("input", None)
    output_dir = raw.pop("output", None)
    segments = raw.pop("segments", None)
    if seed is not None:
        raw["seed"] = seed
    if stream_path is not None:
        input_path = stream_path
    payload: dict = {"config": raw}
    if input_path is not None and segments is not None:
        _fail("config rejected: give either an input stream or inline segments, not both", 2)
    if input_path is not None:
        text = _read_text(input_path)
        payload["stream"] = {"kind": _sniff_kind(text), "csv": text}
    elif segments is not None:
        payload["segments"] = segments
    else:
        _fail("config rejected: no stream: pass --stream PATH or put 'input' or 'segments' in the config", 2)
    return payload, output_dir


def _write_outputs(out_dir: str, files: dict[str, str]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, text in files.items():
        dio.atomic_write_text(os.path.join(out_dir, name), text)


@click.group()
@click.option("--server", default=None, envvar="DRIFTCAL_SERVER", help="Service URL; runs in-process when omitted.")
@click.version_option(package_name="driftcal")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Adaptive calibration experiments: simulate, run, measure, bound."""
    ctx.obj = {"server": server}


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="Simulation request JSON.")
@click.option("--kind", type=click.Choice(["beta", "garch", "panel"]), default=None)
@click.option("--seed", type=click.IntRange(min=0), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=".")
@click.pass_context
def simulate(ctx: click.Context, config_path: str | None, kind: str | None, seed: int | None, out_dir: str) -> None:
    """Generate a synthetic stream CSV (level stream, volatility series, or panel)."""
    payload = _load_json_file(config_path)
    if kind is not None:
        payload["kind"] = kind
    if seed is not None:
        payload["seed"] = seed
    if "kind" not in payload:
        _fail("config rejected: simulation needs a kind (beta, garch or panel)", 2)
    data = _post(ctx, "/simulate", payload)
    name = _SIMULATE_FILENAMES[data["kind"]]
    _write_outputs(out_dir, {name: data["csv"]})
    click.echo(f"wrote {os.path.join(out_dir, name)} ({data['n_rows']} rows); meta: {json.dumps(data['meta'])}")


def _run_like(ctx: click.Context, endpoint: str, payload: dict, out_dir: str) -> None:
    data = _post(ctx, endpoint, payload)
    report = data["report"]
    _write_outputs(out_dir, {"steps.csv": data["steps_csv"], "report.json": dio.dumps_json(report)})
    click.echo(
        f"{data['n_steps']} steps; coverage {report['coverage']:.4f} "
        f"(target {1.0 - report['target_alpha']:.4f}); wrote steps.csv and report.json in {out_dir}"
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="Experiment config JSON.")
@click.option("--stream", "stream_path", type=click.Path(), default=None, help="Input stream CSV.")
@click.option("--seed", type=click.IntRange(min=0), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.pass_context
def run(ctx: click.Context, config_path: str | None, stream_path: str | None, seed: int | None, out_dir: str | None) -> None:
    """Run one learner over one stream; writes steps.csv and report.json."""
    payload, config_out = _prepare_run_payload(config_path, stream_path, seed)
    if payload.get("stream", {}).get("kind") == "panel":
        _fail("config rejected: panel CSVs go through the panel subcommand", 2)
    _run_like(ctx, "/run", payload, out_dir or config_out or ".")


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="Experiment config JSON.")
@click.option("--stream", "stream_path", type=click.Path(), default=None, help="Panel CSV (t,unit,y,y_hat,y_lag).")
@click.option("--seed", type=click.IntRange(min=0), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.pass_context
def panel(ctx: click.Context, config_path: str | None, stream_path: str | None, seed: int | None, out_dir: str | None) -> None:
    """Run per-unit learners over a panel with pooled calibration."""
    raw = _load_json_file(config_path)
    input_path = raw.pop("input", None)
    output_dir = raw.pop("output", None)
    if seed is not None:
        raw["seed"] = seed
    if stream_path is not None:
        input_path = stream_path
    if input_path is None:
        _fail("config rejected: no panel CSV: pass --stream PATH or put 'input' in the config", 2)
    payload = {"config": raw, "csv": _read_text(input_path)}
    _run_like(ctx, "/panel", payload, out_dir or output_dir or ".")


@main.command()
@click.option("--steps", "steps_path", type=click.Path(), required=True, help="A previously written steps.csv.")
@click.option("--alpha", type=float, default=0.1, show_default=True)
@click.option("--bins", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--local-window", type=click.IntRange(min=2), default=500, show_default=True)
@click.option("--min-bin-count", type=click.IntRange(min=1), default=30, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=".")
@click.pass_context
def metrics(ctx: click.Context, steps_path: str, alpha: float, bins: int, local_window: int, min_bin_count: int, out_dir: str) -> None:
    """Recompute the coverage report from a step log."""
    payload = {
        "steps_csv": _read_text(steps_path),
        "alpha": alpha,
        "bins": bins,
        "local_window": local_window,
        "min_bin_count": min_bin_count,
    }
    data = _post(ctx, "/metrics", payload)
    report = data["report"]
    _write_outputs(out_dir, {"report.json": dio.dumps_json(report)})
    click.echo(f"coverage {report['coverage']:.4f} over {report['n_steps']} steps; wrote report.json in {out_dir}")


@main.command()
@click.option("--config", "config_path", type=click.Path(), required=True, help="Bound inputs JSON.")
@click.option("--out", "out_dir", type=click.Path(), default=".")
@click.pass_context
def bounds(ctx: click.Context, config_path: str, out_dir: str) -> None:
    """Evaluate the guarantee ceilings for supplied diagnostics."""
    payload = _load_json_file(config_path)
    data = _post(ctx, "/bounds", payload)
    _write_outputs(out_dir, {"bounds.json": dio.dumps_json(data["results"])})
    click.echo(f"wrote bounds.json in {out_dir}: {json.dumps(data['results'])}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host: str, port: int) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
