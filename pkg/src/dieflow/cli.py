"""Command-line experiment runner.

Subcommands: solve, deform, train, evaluate, bench-vecenv, bench-kernels.
Output root defaults to ./runs or the DIEFLOW_OUT environment variable.
All CSV files carry a schema-version comment as their first line; the SVG
training curve is derived purely from the episode CSV rows.
"""

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import _kernels, agents, ffd, objectives, runconfig
from .environment import EnvConfig, StepLogWriter, make_env
from .mesh import export_vtk, generate_channel, generate_tjunction, min_signed_area
from .solver import MELT, SolverFailure, default_bcs, solve_flow
from .vecenv import VecEnv

EPISODES_SCHEMA = "# dieflow-episodes-v1"
OBJECTIVES_SCHEMA = "# dieflow-objectives-v1"
SCALING_SCHEMA = "# dieflow-vecenv-scaling-v1"


def _out_root(explicit=None):
    return Path(explicit or os.environ.get("DIEFLOW_OUT", "runs"))


def _load_displacement(path, layout):
    doc = json.loads(Path(path).read_text())
    dofs = np.asarray(doc["dofs"], dtype=float)
    if dofs.shape != (layout.n_dofs,):
        raise ValueError(
            f"displacement file must hold {layout.n_dofs} dof values, "
            f"got {dofs.shape}"
        )
    return dofs


def _build_case_mesh(case, resolution, displacement_path=None):
    base = generate_tjunction(resolution) if case == "tjunction" else generate_channel(resolution)
    layout = ffd.dof_layout(case)
    if displacement_path is None:
        return base, layout, np.zeros(layout.n_dofs)
    box = ffd.embed(base, layout.degrees, layout.grid_dims)
    dofs = _load_displacement(displacement_path, layout)
    return ffd.deform(box, layout.displacement_from_dofs(dofs)), layout, dofs


def cmd_solve(args) -> int:
    mesh, _, _ = _build_case_mesh(args.case, args.resolution, args.displacement)
    if min_signed_area(mesh) <= 0:
        print("error: deformed mesh is tangled; no solution written", file=sys.stderr)
        return 1
    try:
        sol = solve_flow(mesh, MELT, default_bcs(args.case))
    except SolverFailure as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return 1
    if not sol.converged:
        print("error: nonlinear iteration did not converge", file=sys.stderr)
        return 1
    report = objectives.evaluate_objectives(mesh, sol, args.case)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_vtk(mesh, out / "solution.vtk", sol)
    fields = {"case": args.case, "resolution": args.resolution,
              "picard_iterations": sol.picard_iterations}
    fields.update(report.csv_fields())
    with open(out / "objectives.csv", "w", newline="") as fh:
        fh.write(OBJECTIVES_SCHEMA + "\n")
        writer = csv.DictWriter(fh, fieldnames=list(fields))
        writer.writeheader()
        writer.writerow(fields)
    print(f"wrote {out / 'solution.vtk'} and {out / 'objectives.csv'}")
    return 0


def cmd_deform(args) -> int:
    mesh, _, _ = _build_case_mesh(args.case, args.resolution, args.displacement)
    export_vtk(mesh, args.out)
    tangled = min_signed_area(mesh) <= 0
    print(f"wrote {args.out}" + (" (mesh is tangled)" if tangled else ""))
    return 0


def moving_average(values, window=100):
    """Trailing moving average with partial windows at the start."""
    values = np.asarray(values, dtype=float)
    cums = np.concatenate([[0.0], np.cumsum(values)])
    n = len(values)
    idx = np.arange(n)
    lo = np.maximum(0, idx - window + 1)
    return (cums[idx + 1] - cums[lo]) / (idx - lo + 1)


def write_episode_csv(path, rows):
    with open(path, "w", newline="") as fh:
        fh.write(EPISODES_SCHEMA + "\n")
        writer = csv.DictWriter(fh, fieldnames=list(agents.EPISODE_LOG_COLUMNS))
        writer.writeheader()
        for row in rows:
            out = dict(row)
            out["episode_reward"] = f"{row['episode_reward']:.17g}"
            out["wall_s"] = f"{row['wall_s']:.3f}"
            writer.writerow(out)


def plot_training_curve(rows, path, window=100):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [r["global_step"] for r in rows]
    walls = [r["wall_s"] for r in rows]
    rewards = [r["episode_reward"] for r in rows]
    smoothed = moving_average(rewards, window)
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    axes[0].plot(steps, smoothed)
    axes[0].set_xlabel("environment steps")
    axes[1].plot(walls, smoothed)
    axes[1].set_xlabel("wall time [s]")
    for ax in axes:
        ax.set_ylabel(f"episode reward (moving avg, {window} episodes)")
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_train(args) -> int:
    doc = runconfig.load_document(args.config)
    try:
        env_config, agent_config, n_envs, run_id = runconfig.parse_train_config(doc)
    except runconfig.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    run_dir = _out_root(doc.get("out_dir")) / run_id
    if run_dir.exists():
        print(f"error: run directory {run_dir} already exists; refusing to "
              "overwrite", file=sys.stderr)
        return 1
    run_dir.mkdir(parents=True)
    (run_dir / "run_config.json").write_text(json.dumps(doc, indent=2) + "\n")

    step_logger = None
    if doc.get("step_log", False):
        step_logger = StepLogWriter(run_dir / "steps.csv", run_id)
    try:
        result = agents.train(
            agent_config, env_config, n_envs=n_envs, run_id=run_id,
            out_dir=str(run_dir), resume_from=args.resume,
            step_logger=step_logger,
        )
    finally:
        if step_logger is not None:
            step_logger.close()
    write_episode_csv(run_dir / "episodes.csv", result.episode_rows)
    if result.episode_rows:
        plot_training_curve(result.episode_rows, run_dir / "reward_curve.svg")
    print(
        f"run {run_id}: {result.global_steps} steps, {result.n_episodes} "
        f"episodes, {result.wall_s:.1f}s -> {run_dir}"
    )
    return 0


def cmd_evaluate(args) -> int:
    doc = runconfig.load_document(args.config)
    try:
        runconfig.validate(doc, runconfig.TRAIN_SCHEMA)
    except runconfig.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    env_config = runconfig.build_env_config(doc)
    stats = agents.evaluate_policy(
        args.checkpoint, env_config, args.episodes,
        deterministic=not args.stochastic, seed=doc.get("seed", 0),
    )
    print(f"episodes:    {args.episodes}")
    print(f"mean reward: {stats.mean_reward:.4f}")
    print(f"mean steps:  {stats.mean_steps:.2f}")
    print(f"goal rate:   {stats.goal_rate:.3f}")
    return 0


def run_vecenv_benchmark(env_config: EnvConfig, n_envs_list, budget_steps, seed=0):
    """Wall time and speedup for a fixed step budget at several env counts."""
    records = []
    base_wall = None
    for n in n_envs_list:
        envs = [make_env(env_config, seed=s) for s in VecEnv.derive_seeds(seed, n)]
        vec = VecEnv(envs)
        rng = np.random.default_rng(seed)
        space = vec.action_space
        vec.vec_reset()
        steps = 0
        t0 = time.perf_counter()
        while steps < budget_steps:
            actions = [space.sample(rng) for _ in range(n)]
            vec.vec_step(np.array(actions))
            steps += n
        wall = time.perf_counter() - t0
        vec.close()
        if base_wall is None:
            base_wall = wall
        records.append({
            "n_envs": n,
            "steps": steps,
            "wall_s": wall,
            "speedup": base_wall / wall,
        })
    return records


def cmd_bench_vecenv(args) -> int:
    doc = runconfig.load_document(args.config)
    try:
        runconfig.validate(doc, runconfig.BENCH_SCHEMA)
    except runconfig.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    env_config = runconfig.build_env_config(doc)
    n_list = doc.get("n_envs_list", [1, 2, 4, 8])
    records = run_vecenv_benchmark(
        env_config, n_list, doc["budget_steps"], doc.get("seed", 0)
    )
    out_dir = _out_root(doc.get("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{doc['run_id']}_scaling.csv"
    with open(path, "w", newline="") as fh:
        fh.write(SCALING_SCHEMA + "\n")
        writer = csv.DictWriter(fh, fieldnames=["n_envs", "steps", "wall_s", "speedup"])
        writer.writeheader()
        for rec in records:
            writer.writerow({**rec, "wall_s": f"{rec['wall_s']:.4f}",
                             "speedup": f"{rec['speedup']:.3f}"})
    print(f"{'n_envs':>7} {'steps':>8} {'wall_s':>9} {'speedup':>8}")
    for rec in records:
        print(f"{rec['n_envs']:>7} {rec['steps']:>8} "
              f"{rec['wall_s']:>9.3f} {rec['speedup']:>8.2f}")
    print(f"wrote {path}")
    return 0


def cmd_bench_kernels(args) -> int:
    """Time the hot kernels under the numba and numpy backends."""
    mesh = generate_tjunction(args.resolution)
    layout = ffd.dof_layout("tjunction")
    box = ffd.embed(mesh, layout.degrees, layout.grid_dims)
    uv = box.param_coords
    s0 = box.spline0
    eta = np.ones(mesh.n_triangles)

    backends = {"numpy": (
        _kernels.bspline_eval_many_numpy,
        _kernels.tri_geometry_numpy,
        _kernels.stokes_element_values_numpy,
    )}
    if _kernels.NUMBA_AVAILABLE:
        backends["numba"] = (
            _kernels.bspline_eval_many_numba,
            _kernels.tri_geometry_numba,
            _kernels.stokes_element_values_numba,
        )

    print(f"mesh: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, "
          f"repeats: {args.repeat}")
    print(f"{'kernel':<24} {'backend':<8} {'ms/call':>10}")
    results = {}
    for name, (spline_fn, geom_fn, stokes_fn) in backends.items():
        # warm JIT before timing
        spline_fn(s0.knots_u.knots, 2, s0.knots_v.knots, 2, s0.control_points, uv)
        areas, grads = geom_fn(mesh.nodes, mesh.triangles)
        stokes_fn(areas, grads, eta, 1.0)
        for label, fn in (
            ("bspline_eval_many", lambda: spline_fn(
                s0.knots_u.knots, 2, s0.knots_v.knots, 2, s0.control_points, uv)),
            ("tri_geometry", lambda: geom_fn(mesh.nodes, mesh.triangles)),
            ("stokes_element_values", lambda: stokes_fn(areas, grads, eta, 1.0)),
        ):
            t0 = time.perf_counter()
            for _ in range(args.repeat):
                fn()
            ms = (time.perf_counter() - t0) / args.repeat * 1e3
            results[(label, name)] = ms
            print(f"{label:<24} {name:<8} {ms:>10.3f}")
    if _kernels.NUMBA_AVAILABLE:
        for label in ("bspline_eval_many", "tri_geometry", "stokes_element_values"):
            ratio = results[(label, "numpy")] / results[(label, "numba")]
            print(f"{label:<24} numba speedup vs numpy: {ratio:.1f}x")
    print(f"active backend: {_kernels.BACKEND}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dieflow",
        description="RL shape optimization of extrusion-die flow channels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="mesh, optionally deform, solve, report objectives")
    p.add_argument("--case", choices=["tjunction", "channel"], required=True)
    p.add_argument("--resolution", type=float, default=0.05)
    p.add_argument("--displacement", help="JSON file with a 'dofs' array")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("deform", help="write the deformed mesh as VTK")
    p.add_argument("--case", choices=["tjunction", "channel"], required=True)
    p.add_argument("--resolution", type=float, default=0.05)
    p.add_argument("--displacement", required=True)
    p.add_argument("--out", required=True, help="output VTK file")
    p.set_defaults(fn=cmd_deform)

    p = sub.add_parser("train", help="train an agent from a config document")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="roll out a saved policy")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--stochastic", action="store_true")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("bench-vecenv", help="vectorized-env scaling benchmark")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_bench_vecenv)

    p = sub.add_parser("bench-kernels", help="numba vs numpy kernel benchmark")
    p.add_argument("--resolution", type=float, default=0.05)
    p.add_argument("--repeat", type=int, default=20)
    p.set_defaults(fn=cmd_bench_kernels)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
