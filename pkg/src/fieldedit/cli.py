"""Command-line front end for the whole pipeline.

Every failure exits nonzero with a single machine-readable JSON object on
stderr: {"error": <code>, "message": ..., ["field": ...]}.  Exit codes:
2 invalid input or spec, 3 numeric/runtime failure, 4 I/O problems.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .editing import EditSpec, edit
from .errors import FieldEditError, InvalidSpec
from .fields import (Capsule, Ellipsoid, RoundedBox, Sphere, Torus, Union,
                     load_checkpoint, save_checkpoint)
from .flows import FlowConfig, run_smoothing, trace_to_csv
from .geometry import marching_cubes, estimate_volume, write_obj, write_ply
from .rigid import RigidConfig, rigid_edit, save_tangential
from .rigid import trace_to_csv as rigid_trace_csv
from .sensitivity import basis_rows
from .training import (AutoDecoderConfig, FitConfig, MeshSdf, ShapeFamily,
                       fit_sdf, load_auto_decoder, save_auto_decoder,
                       semantic_edit, train_auto_decoder)


def _fail(exc: FieldEditError, code: int):
    sys.stderr.write(json.dumps(exc.payload()) + "\n")
    sys.exit(code)


def _guard(fn):
    """Map library errors to exit codes with JSON diagnostics."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InvalidSpec as e:
            _fail(e, 2)
        except FieldEditError as e:
            _fail(e, 3)
        except FileNotFoundError as e:
            sys.stderr.write(json.dumps(
                {"error": "io", "message": str(e)}) + "\n")
            sys.exit(4)
        except json.JSONDecodeError as e:
            sys.stderr.write(json.dumps(
                {"error": "invalid-spec", "message": f"bad JSON: {e}"}) + "\n")
            sys.exit(2)
    return wrapper


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


_ANALYTIC = {
    "sphere": lambda: Sphere(1.0),
    "small-sphere": lambda: Sphere(0.5),
    "ellipsoid": lambda: Ellipsoid((0.9, 0.7, 0.5)),
    "torus": lambda: Torus(0.6, 0.25),
    "box": lambda: RoundedBox((0.5, 0.4, 0.3), 0.1),
    "capsule": lambda: Capsule((0, 0, -0.45), (0, 0, 0.45), 0.35),
    "blobby": lambda: Union([Sphere(0.55, (0.3, 0, 0)),
                             Sphere(0.55, (-0.25, 0.25, 0)),
                             Sphere(0.55, (-0.1, -0.3, 0.2))]),
}


def _resolve_target(name: str):
    if name in _ANALYTIC:
        return _ANALYTIC[name]()
    if os.path.exists(name):
        from .geometry import read_obj
        return MeshSdf(read_obj(name))
    raise InvalidSpec(f"unknown target {name!r}; analytic names: "
                      f"{sorted(_ANALYTIC)} or an OBJ path", field="target")


@click.group()
def main():
    """Edit neural implicit shapes through boundary sensitivity."""


@main.command()
@click.option("--target", required=True,
              help="Analytic shape name or OBJ mesh path.")
@click.option("--out", required=True, type=click.Path())
@click.option("--iters", default=5000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--omega0", default=30.0, show_default=True)
@click.option("--normal-weight", default=0.1, show_default=True)
@_guard
def fit(target, out, iters, seed, omega0, normal_weight):
    """Fit a sine MLP to a target SDF."""
    tgt = _resolve_target(target)
    field = fit_sdf(tgt, FitConfig(iterations=iters, seed=seed,
                                   w_normal=normal_weight), omega0=omega0)
    save_checkpoint(field, out)
    click.echo(json.dumps({"out": out, "params": field.param_count}))


@main.command("edit")
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path())
@click.option("--report-csv", type=click.Path())
@click.option("--config", type=click.Path(exists=True), help="JSON defaults file.")
@_guard
def edit_cmd(model, spec_path, out, report_path, report_csv, config):
    """Apply an edit spec to a checkpoint."""
    defaults = _load_config(config)
    with open(spec_path) as fh:
        doc = json.load(fh)
    for k, v in defaults.get("edit", {}).items():
        doc.setdefault(k, v)
    spec = EditSpec.from_json(doc)
    field = load_checkpoint(model)
    updated, report = edit(field, spec)
    save_checkpoint(updated, out)
    if report_path:
        with open(report_path, "w") as fh:
            json.dump(report.to_json(), fh, indent=1)
    if report_csv:
        with open(report_csv, "w") as fh:
            fh.write(report.to_csv())
    click.echo(json.dumps({"out": out, "iterations": report.iterations,
                           "snapshot": report.snapshot_id}))


@main.command()
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--iters", default=10, show_default=True)
@click.option("--tau", default=0.01, show_default=True)
@click.option("--preserve-volume", is_flag=True)
@click.option("--samples", default=2000, show_default=True)
@click.option("--volume-res", default=128, show_default=True)
@click.option("--trace", "trace_path", type=click.Path())
@click.option("--seed", default=0, show_default=True)
@_guard
def smooth(model, out, iters, tau, preserve_volume, samples, volume_res,
           trace_path, seed):
    """Mean-curvature smoothing with optional volume preservation."""
    field = load_checkpoint(model)
    config = FlowConfig(tau=tau, iterations=iters,
                        volume_preserving=preserve_volume,
                        sample_count=samples, volume_resolution=volume_res,
                        seed=seed)
    updated, trace = run_smoothing(field, config)
    save_checkpoint(updated, out)
    if trace_path:
        with open(trace_path, "w") as fh:
            fh.write(trace_to_csv(trace))
    click.echo(json.dumps({"out": out,
                           "volume_initial": trace[0]["volume"],
                           "volume_final": trace[-1]["volume"]}))


@main.command("rigid-edit")
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--alpha", type=float, default=None,
              help="Override the constraint weight from the spec.")
@click.option("--ft-out", type=click.Path(), help="Tangential net checkpoint.")
@click.option("--trace", "trace_path", type=click.Path())
@_guard
def rigid_cmd(model, spec_path, out, alpha, ft_out, trace_path):
    """Rigidity-regularized editing (Killing energy + boundary constraints)."""
    field = load_checkpoint(model)
    with open(spec_path) as fh:
        config = RigidConfig.from_json(json.load(fh), alpha=alpha)
    updated, ft, trace, _ = rigid_edit(field, config)
    save_checkpoint(updated, out)
    if ft_out:
        save_tangential(ft, ft_out)
    if trace_path:
        with open(trace_path, "w") as fh:
            fh.write(rigid_trace_csv(trace))
    click.echo(json.dumps({"out": out,
                           "killing": trace[-1]["killing"],
                           "constraint": trace[-1]["constraint"]}))


@main.command("train-family")
@click.option("--family", "family_path", required=True, type=click.Path(exists=True))
@click.option("--latent-dim", default=8, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--iters", default=8000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@_guard
def train_family(family_path, latent_dim, out, iters, seed):
    """Train the toy auto-decoder over a shape-family JSON."""
    family = ShapeFamily.load(family_path)
    auto = train_auto_decoder(family, latent_dim,
                              AutoDecoderConfig(iterations=iters, seed=seed))
    save_auto_decoder(auto, out)
    click.echo(json.dumps({"out": out, "shapes": len(auto.latents),
                           "latent_dim": auto.latent_dim}))


@main.command("semantic-edit")
@click.option("--model", required=True, type=click.Path(exists=True),
              help="Auto-decoder checkpoint.")
@click.option("--shape-index", default=0, show_default=True)
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path())
@_guard
def semantic_cmd(model, shape_index, spec_path, out, report_path):
    """Latent-only editing of one auto-decoder shape."""
    auto = load_auto_decoder(model)
    field = auto.field_for(shape_index)
    with open(spec_path) as fh:
        spec = EditSpec.from_json(json.load(fh))
    updated, report = semantic_edit(field, spec)
    auto.latents[shape_index] = updated.latent
    save_auto_decoder(auto, out)
    if report_path:
        with open(report_path, "w") as fh:
            json.dump(report.to_json(), fh, indent=1)
    click.echo(json.dumps({"out": out, "iterations": report.iterations,
                           "converged": report.converged}))


@main.command()
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--res", default=64, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_guard
def mesh(model, res, out):
    """Extract the zero level set to OBJ or PLY."""
    field = load_checkpoint(model)
    m = marching_cubes(field, res)
    if out.endswith(".ply"):
        write_ply(m, out)
    else:
        write_obj(m, out)
    click.echo(json.dumps({"out": out, "vertices": len(m.vertices),
                           "triangles": len(m.triangles)}))


@main.command("basis-viz")
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--param-index", required=True, type=int)
@click.option("--res", default=64, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_guard
def basis_viz(model, param_index, res, out):
    """Export the mesh colored by one basis function (red out / blue in)."""
    field = load_checkpoint(model)
    if not 0 <= param_index < field.param_count:
        raise InvalidSpec(f"parameter index {param_index} out of range "
                          f"[0, {field.param_count})", field="param-index")
    m = marching_cubes(field, res)
    m.scalars["basis"] = basis_rows(field, m.vertices)[:, param_index]
    if out.endswith(".ply"):
        write_ply(m, out, scalar="basis")
    else:
        write_obj(m, out, scalar="basis")
    click.echo(json.dumps({"out": out,
                           "channel_min": float(m.scalars["basis"].min()),
                           "channel_max": float(m.scalars["basis"].max())}))


@main.command()
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--res", default=128, show_default=True)
@_guard
def volume(model, res):
    """Estimate the enclosed volume on a voxel grid."""
    field = load_checkpoint(model)
    click.echo(json.dumps({"volume": estimate_volume(field, res)}))


@main.command()
@click.option("--host", default=None, help="Default FIELDEDIT_HOST or 127.0.0.1.")
@click.option("--port", default=None, type=int,
              help="Default FIELDEDIT_PORT or 8642.")
@click.option("--model-dir", type=click.Path(exists=True))
@_guard
def serve(host, port, model_dir):
    """Run the HTTP editing service."""
    from .service import serve as run
    run(host=host or os.environ.get("FIELDEDIT_HOST", "127.0.0.1"),
        port=int(port or os.environ.get("FIELDEDIT_PORT", "8642")),
        model_dir=model_dir)


if __name__ == "__main__":
    main()
