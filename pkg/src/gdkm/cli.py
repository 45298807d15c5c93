from __future__ import annotations

import json
from pathlib import Path
from typing import List, NoReturn, Optional

import typer

from gdkm.errors import ConfigError, DataError, NumericError, exit_code_for
from gdkm.project.config import DEFAULT_CONFIG_NAME, config_keys_help
from gdkm.runtime.jsonio import jsonable
from gdkm.services.commands import (
	DEFAULT_LAMBDA_GRID,
	DEFAULT_MAX_NODES,
	ValidationResult,
	init_config,
	run_eval,
	run_linear_demo,
	run_nngp,
	run_sweep,
	run_train,
	validate_run,
)


app = typer.Typer(name="gdkm", help="Graph convolutional deep kernel machines: training, NNGP baselines and kernel plots")

KNOWN_ERRORS = (ConfigError, DataError, NumericError)
CONFIG_EPILOG = config_keys_help()


def _exit_with(exc: Exception) -> NoReturn:
	code = exit_code_for(exc)
	if code is None:
		raise exc
	payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
	if isinstance(exc, ConfigError):
		payload["errors"] = exc.errors
	typer.echo(json.dumps(payload), err=True)
	raise typer.Exit(code=code)


def _floats(text: str, flag: str) -> List[float]:
	try:
		return [float(v) for v in text.split(",") if v.strip()]
	except ValueError:
		raise typer.BadParameter(f"{flag} must be a comma-separated list of numbers (inf allowed)")


def _ints(text: str, flag: str) -> List[int]:
	try:
		return [int(v) for v in text.split(",") if v.strip()]
	except ValueError:
		raise typer.BadParameter(f"{flag} must be a comma-separated list of integers")


def _overrides(
	sets: List[str],
	dataset: Optional[Path] = None,
	seed: Optional[int] = None,
	epochs: Optional[int] = None,
	nu: Optional[str] = None,
	scheme: Optional[str] = None,
) -> List[str]:
	out = list(sets)
	if dataset is not None:
		out += [f"dataset.path={dataset}", "dataset.synthetic="]
	if seed is not None:
		out.append(f"seed={seed}")
	if epochs is not None:
		out.append(f"training.epochs={epochs}")
	if nu is not None:
		out.append(f"model.nu=[{nu}]")
	if scheme is not None:
		out.append(f"model.scheme={scheme}")
	return out


def _config_path(config: Optional[Path]) -> Optional[Path]:
	if config is not None:
		return config
	default = Path(DEFAULT_CONFIG_NAME)
	return default if default.exists() else None


@app.command(help="Write a commented gdkm.yaml into the current directory")
def init(
	dataset_path: str = typer.Option("data", "--dataset", help="Value for dataset.path in the template"),
) -> None:
	try:
		target = init_config(dataset_path=dataset_path)
	except KNOWN_ERRORS as exc:
		_exit_with(exc)
	typer.echo(f"Created {target.name}")
	typer.echo("\nNext steps:")
	typer.echo("1. Point dataset.path at a dataset directory")
	typer.echo("2. Run 'gdkm validate' and then 'gdkm train'")


@app.command(help="Check a config and dataset without training", epilog=CONFIG_EPILOG)
def validate(
	config: Optional[Path] = typer.Option(None, "--config", "-c", help="Path to gdkm.yaml (default: ./gdkm.yaml if present)"),
	dataset: Optional[Path] = typer.Option(None, "--dataset", help="Dataset directory (overrides dataset.path)"),
	sets: List[str] = typer.Option([], "--set", help="Override a config key, e.g. --set model.nu=inf"),
) -> None:
	result: ValidationResult = validate_run(dataset_dir=dataset, config_path=_config_path(config), overrides=sets)
	for line in result.info:
		typer.echo(line)
	for warn in result.warnings:
		typer.echo(warn)
	if not result.ok:
		for err in result.errors:
			typer.echo(err, err=True)
		config_failed = any(e.startswith("ERROR: config:") for e in result.errors)
		raise typer.Exit(code=2 if config_failed else 3)
	typer.echo("Configuration and dataset are valid.")


@app.command(help="Train a sparse graph DKM; writes a checkpoint, metrics.jsonl and final.json", epilog=CONFIG_EPILOG)
def train(
	config: Optional[Path] = typer.Option(None, "--config", "-c", help="Path to gdkm.yaml (default: ./gdkm.yaml if present)"),
	dataset: Optional[Path] = typer.Option(None, "--dataset", help="Dataset directory (overrides dataset.path)"),
	output_dir: Optional[Path] = typer.Option(None, "--output-dir", "-o", help="Output directory (overrides output_dir)"),
	seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
	epochs: Optional[int] = typer.Option(None, "--epochs", help="Training epochs"),
	nu: Optional[str] = typer.Option(None, "--nu", help="KL weight, or comma-separated per-layer values; inf = NNGP layer"),
	scheme: Optional[str] = typer.Option(None, "--scheme", help="inter or intra inducing points"),
	sets: List[str] = typer.Option([], "--set", help="Override a config key, e.g. --set model.depth=3"),
) -> None:
	try:
		outcome = run_train(
			_config_path(config),
			_overrides(sets, dataset, seed, epochs, nu, scheme),
			output_dir,
		)
	except KNOWN_ERRORS as exc:
		_exit_with(exc)
	typer.echo(json.dumps(jsonable({k: outcome.final[k] for k in ("val_acc", "test_acc", "checkpoint")})))


@app.command(help="Fit only the output head over the fixed graph NNGP kernels (every layer at nu = inf)", epilog=CONFIG_EPILOG)
def nngp(
	config: Optional[Path] = typer.Option(None, "--config", "-c", help="Path to gdkm.yaml (default: ./gdkm.yaml if present)"),
	dataset: Optional[Path] = typer.Option(None, "--dataset", help="Dataset directory (overrides dataset.path)"),
	output_dir: Optional[Path] = typer.Option(None, "--output-dir", "-o", help="Output directory (overrides output_dir)"),
	seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
	epochs: Optional[int] = typer.Option(None, "--epochs", help="Training epochs"),
	scheme: Optional[str] = typer.Option(None, "--scheme", help="inter or intra inducing points"),
	export_kernels: bool = typer.Option(False, "--export-kernels", help="Write normalized per-layer NNGP kernels as CSV"),
	max_nodes: int = typer.Option(DEFAULT_MAX_NODES, "--max-nodes", help="Node sample size for exported kernels"),
	sets: List[str] = typer.Option([], "--set", help="Override a config key"),
) -> None:
	if max_nodes < 2:
		raise typer.BadParameter("--max-nodes must be >= 2")
	try:
		outcome = run_nngp(
			_config_path(config),
			_overrides(sets, dataset, seed, epochs, None, scheme),
			output_dir,
			export_kernels=export_kernels,
			max_nodes=max_nodes,
		)
	except KNOWN_ERRORS as exc:
		_exit_with(exc)
	typer.echo(json.dumps(jsonable({k: outcome.final[k] for k in ("val_acc", "test_acc", "checkpoint")})))


@app.command("linear-demo", help="Closed-form linear graph DKM vs NNGP: kernel CSVs and CKA over a lambda grid")
def linear_demo(
	output_dir: Path = typer.Option(Path("runs/linear-demo"), "--output-dir", "-o", help="Output directory"),
	nodes: int = typer.Option(50, "--nodes", help="Number of nodes"),
	lam: float = typer.Option(0.5, "--lambda", help="Lambda whose per-layer kernels are exported"),
	depth: int = typer.Option(2, "--depth", help="Number of Gram layers"),
	seed: int = typer.Option(0, "--seed", help="Seed for graph and inputs"),
	edge_prob: float = typer.Option(0.1, "--edge-prob", help="Erdos-Renyi edge probability"),
	lambdas: str = typer.Option(",".join(str(v) for v in DEFAULT_LAMBDA_GRID), "--lambdas", help="Comma-separated lambda grid for the CKA table"),
	gd_epochs: int = typer.Option(0, "--gd-epochs", help="Confirm the closed form by gradient ascent for this many epochs (0 = skip)"),
	dataset: Optional[Path] = typer.Option(None, "--dataset", help="Use a node subset of this dataset instead of a random graph"),
) -> None:
	grid = _floats(lambdas, "--lambdas")
	if depth < 1 or nodes < 2 or gd_epochs < 0:
		raise typer.BadParameter("--depth must be >= 1, --nodes >= 2 and --gd-epochs >= 0")
	try:
		summary = run_linear_demo(
			output_dir,
			num_nodes=nodes,
			lam=lam,
			depth=depth,
			seed=seed,
			edge_prob=edge_prob,
			lambdas=grid,
			gd_epochs=gd_epochs,
			dataset_dir=dataset,
		)
	except KNOWN_ERRORS as exc:
		_exit_with(exc)
	for row in summary["cka"]:
		typer.echo(f"lambda={row['lambda']:g} dkm_cka={row['dkm']} nngp_cka={row['nngp']}")
	if "gd" in summary:
		typer.echo(f"gradient ascent max |diff| = {summary['gd']['max_abs_kernel_diff']:.3e}")


@app.command(help="Train over a nu x scheme x seed grid; writes sweep.csv and sweep_summary.json", epilog=CONFIG_EPILOG)
def sweep(
	config: Optional[Path] = typer.Option(None, "--config", "-c", help="Path to gdkm.yaml (default: ./gdkm.yaml if present)"),
	dataset: Optional[Path] = typer.Option(None, "--dataset", help="Dataset directory (overrides dataset.path)"),
	output_dir: Optional[Path] = typer.Option(None, "--output-dir", "-o", help="Output directory (overrides output_dir)"),
	nu_grid: str = typer.Option("0.001,0.01,0.1,1,10,100,1000,inf", "--nu-grid", help="Comma-separated nu values"),
	schemes: str = typer.Option("inter,intra", "--schemes", help="Comma-separated inducing schemes"),
	seeds: str = typer.Option("0", "--seeds", help="Comma-separated seeds"),
	depths: Optional[str] = typer.Option(None, "--depths", help="Comma-separated depths (adds a depth column)"),
	num_inducing: Optional[str] = typer.Option(None, "--num-inducing", help="Comma-separated inducing-point counts (adds a num_inducing column)"),
	centering: Optional[str] = typer.Option(None, "--centering", help="Comma-separated centering modes: none, fixed, learned (adds a centering column)"),
	jobs: int = typer.Option(1, "--jobs", help="Cells run in this many worker processes"),
	epochs: Optional[int] = typer.Option(None, "--epochs", help="Training epochs per cell"),
	sets: List[str] = typer.Option([], "--set", help="Override a config key"),
) -> None:
	nus = _floats(nu_grid, "--nu-grid")
	scheme_list = [s.strip() for s in schemes.split(",") if s.strip()]
	seed_list = _ints(seeds, "--seeds")
	depth_list = _ints(depths, "--depths") if depths else None
	inducing_list = _ints(num_inducing, "--num-inducing") if num_inducing else None
	centering_list = [c.strip() for c in centering.split(",") if c.strip()] if centering else None
	try:
		outcome = run_sweep(
			_config_path(config),
			_overrides(sets, dataset, None, epochs),
			output_dir,
			nu_grid=nus,
			schemes=scheme_list,
			seeds=seed_list,
			depths=depth_list,
			num_inducing=inducing_list,
			centering=centering_list,
			jobs=max(1, jobs),
		)
	except KNOWN_ERRORS as exc:
		_exit_with(exc)
	typer.echo(f"Sweep table: {outcome.csv}")
	typer.echo(f"Summary: {outcome.summary}")
	if outcome.failures is not None:
		typer.echo(f"{len(outcome.table.failures())} cell(s) failed, see {outcome.failures}")


@app.command("eval", help="Test accuracy, per-class accuracy and top-layer CKA of a checkpoint", epilog=CONFIG_EPILOG)
def evaluate(
	checkpoint: Path = typer.Argument(..., help="Path to a .gdkmckpt file"),
	dataset: Optional[Path] = typer.Option(None, "--dataset", help="Dataset directory (default: the one recorded at training)"),
	config: Optional[Path] = typer.Option(None, "--config", "-c", help="Path to gdkm.yaml (default: the run recorded next to the checkpoint)"),
	mc_samples: Optional[int] = typer.Option(None, "--mc-samples", help="Weight samples for predictions"),
	seed: Optional[int] = typer.Option(None, "--seed", help="Seed for the Monte-Carlo draws"),
	sets: List[str] = typer.Option([], "--set", help="Override a config key"),
) -> None:
	if mc_samples is not None and mc_samples < 1:
		raise typer.BadParameter("--mc-samples must be >= 1")
	try:
		report = run_eval(checkpoint, dataset, config, sets, mc_samples=mc_samples, seed=seed)
	except KNOWN_ERRORS as exc:
		_exit_with(exc)
	typer.echo(json.dumps(jsonable(report), indent=2))
