import argparse
import logging
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from dotenv import load_dotenv

from utils.dl_engine import DLEngine
from utils.errors import ConfigError, QGNLOError
from utils.graph_model import load_graph, star_graph, wire_graph
from utils.logger import Logger
from utils.run_records import (
    RunConfig,
    RunResult,
    methods_of,
    write_csv,
    write_field_dump,
    write_json,
    write_results_csv,
)
from utils.sos_engine import SOSEngine, gamma_sos, intrinsic_normalize
from utils.spectral_solver import SpectralSolver, trk_residual

TOPOLOGY_ARMS = {"3star": 3, "4star": 4, "3wire": 3}
TRK_WARNING = 1e-2


def sample_graph(topology, rng, length_range, angle_range, name=None):
    """Draw one graph of a fixed topology with uniform lengths and angles."""
    n = TOPOLOGY_ARMS[topology]
    lengths = rng.uniform(length_range[0], length_range[1], size=n)
    angles = rng.uniform(angle_range[0], angle_range[1], size=n)
    build = wire_graph if topology == "3wire" else star_graph
    graph = build(lengths.tolist(), angles.tolist(), name=name or topology)
    parameters = {f"length_{p + 1}": float(a) for p, a in enumerate(lengths)}
    parameters.update({f"angle_{p + 1}": float(t) for p, t in enumerate(angles)})
    return graph, parameters


def spawn_sample_seeds(seed, samples):
    return np.random.SeedSequence(seed).spawn(samples)


def max_relative_deviation(reference, other):
    scale = float(np.abs(reference).max())
    diff = float(np.abs(np.asarray(other) - np.asarray(reference)).max())
    return diff / scale if scale > 0.0 else diff


class QGNLORunner:
    def __init__(self, logger, grid=2001, **solver_options):
        """
        Wire the spectral solver and both tensor engines to one logger.
        """
        self.logger = logger
        self.grid = grid
        self.solver = SpectralSolver(logger, grid=grid, **solver_options)
        self.sos_engine = SOSEngine(logger)
        self.dl_engine = DLEngine(logger)

    def evaluate(self, graph, method, modes, spectrum=None, parameters=None):
        """
        Compute the requested tensors for one graph.
        A precomputed spectrum may be passed in when only angles changed.
        """
        result = RunResult(graph=graph.summary(), method=method, modes=modes, parameters=dict(parameters or {}))
        methods = methods_of(method)

        if "sos" in methods:
            start = time.perf_counter()
            if spectrum is None or spectrum.n_modes < modes:
                spectrum = self.solver.find_spectrum(graph, modes)
            raw, (mx, my) = self.sos_engine.compute(spectrum, graph)
            result.timings["sos"] = time.perf_counter() - start
            result.raw["sos"] = raw
            result.intrinsic["sos"] = intrinsic_normalize(raw.beta, raw.gamma, spectrum.e10)
            result.trk_residual = trk_residual(spectrum, mx, my, 0)
            if result.trk_residual > TRK_WARNING:
                self.logger.warning(
                    f"TRK residual {result.trk_residual:.3e} on '{graph.name}' with {spectrum.n_modes} modes"
                )

        if "dl" in methods:
            start = time.perf_counter()
            if spectrum is None:
                spectrum = self.solver.find_spectrum(graph, 2)
            ground = spectrum.ground_state()
            dl = self.dl_engine.compute(graph, ground, spectrum.e10)
            result.timings["dl"] = time.perf_counter() - start
            result.raw["dl"] = dl.tensors
            result.intrinsic["dl"] = intrinsic_normalize(dl.tensors.beta, dl.tensors.gamma, spectrum.e10)
            result.dl_diagnostics = dl.diagnostics
            result.fields = dl.fields
            result.ground = ground

        result.E0 = float(spectrum.energies[0])
        result.E1 = float(spectrum.energies[1])

        if method == "both":
            sos, dl = result.intrinsic["sos"], result.intrinsic["dl"]
            result.deviations = {
                "beta": max_relative_deviation(sos.beta, dl.beta),
                "gamma": max_relative_deviation(sos.gamma, dl.gamma),
            }
            self.logger.info(
                f"SOS vs DL on '{graph.name}': beta {result.deviations['beta']:.3e}, "
                f"gamma {result.deviations['gamma']:.3e} (relative to max component)"
            )

        for name, tensors in result.intrinsic.items():
            for violation in tensors.bound_violations():
                result.flags.append(f"{name}:{violation}")
        if result.flags:
            self.logger.warning(f"Intrinsic bound violations on '{graph.name}': {result.flags}")
        primary = result.intrinsic["dl" if "dl" in result.intrinsic else "sos"]
        result.beta_vanishes = bool(np.abs(primary.beta).max() < 1e-8)
        return result

    def run_single(self, config, graph=None):
        config.validate()
        graph = graph or load_graph(config.graph_path)
        self.logger.info(f"Running {config.method} on '{graph.name}' with {config.modes} modes")
        try:
            result = self.evaluate(graph, config.method, config.modes)
        except QGNLOError as e:
            raise QGNLOError(f"Run on '{graph.name}' with method {config.method} failed: {e}") from e

        if config.dump_fields and result.fields:
            path = write_field_dump(config.dump_fields, graph, result.ground, result.fields)
            self.logger.info(f"DL fields written to {path}")
        if config.out:
            write_json(config.out, {"config": config.to_dict(), "result": result.to_dict()})
            self.logger.info(f"Results written to {config.out}")
        return result

    def sweep_angles(self, graph, config):
        if config.steps == 1:
            return [math.degrees(graph.edge(config.rotate_edge).angle)]
        return np.linspace(config.sweep_start, config.sweep_stop, config.steps).tolist()

    def run_sweep(self, config, graph=None):
        config.validate()
        if config.rotate_edge is None:
            raise ConfigError("A sweep needs --rotate-edge")
        graph = graph or load_graph(config.graph_path)
        angles = self.sweep_angles(graph, config)
        self.logger.info(
            f"Sweeping edge {config.rotate_edge} of '{graph.name}' over {len(angles)} angles ({config.method})"
        )
        # Lengths and topology are fixed, so one spectrum serves every angle
        modes = config.modes if "sos" in methods_of(config.method) else 2
        spectrum = self.solver.find_spectrum(graph, modes)

        results = []
        for angle in angles:
            rotated = graph.with_edge_angle(config.rotate_edge, math.radians(angle))
            result = self.evaluate(
                rotated, config.method, config.modes, spectrum=spectrum, parameters={"angle_deg": angle}
            )
            results.append(result)

        if config.out:
            write_results_csv(config.out, results, config.method, ["angle_deg"])
            self.logger.info(f"Sweep table written to {config.out}")
        return results

    def run_monte_carlo(self, config):
        config.validate()
        if config.topology is None:
            raise ConfigError("Monte Carlo needs --topology")
        seeds = spawn_sample_seeds(config.seed, config.samples)
        tasks = [
            (index, config.topology, seeds[index], config, index < config.audit_samples)
            for index in range(config.samples)
        ]
        self.logger.info(
            f"Monte Carlo: {config.samples} x {config.topology}, seed {config.seed}, "
            f"{config.workers} worker(s), method {config.method}"
        )

        start = time.perf_counter()
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as executor:
                results = list(executor.map(_monte_carlo_sample, tasks, chunksize=8))
        else:
            results = [self.monte_carlo_sample(*task) for task in tasks]
        elapsed = time.perf_counter() - start

        summary = self.summarize(results, config)
        summary["wall_time_s"] = elapsed
        if config.out:
            table_method = "both" if config.audit_samples else config.method
            write_results_csv(config.out, results, table_method, self._sample_columns(config.topology))
            write_json(_summary_path(config.out), summary)
            self.logger.info(f"Monte Carlo table written to {config.out}")
        return results, summary

    def monte_carlo_sample(self, index, topology, seed_sequence, config, audit):
        rng = np.random.default_rng(seed_sequence)
        graph, parameters = sample_graph(
            topology, rng, config.length_range, config.angle_range, name=f"{topology}-{index}"
        )
        parameters = {"sample": index, "seed": config.seed, **parameters}
        method = "both" if audit else config.method
        try:
            result = self.evaluate(graph, method, config.modes, parameters=parameters)
        except Exception as e:
            self.logger.error(f"Error evaluating sample {index} ({graph.name}): {e}")
            result = RunResult(graph=graph.summary(), method=method, modes=config.modes, parameters=parameters, error=str(e))
        # Keep workers' payloads small; fields are only needed for dumps
        result.fields = None
        result.ground = None
        return result

    def summarize(self, results, config):
        ok = [r for r in results if r.error is None]
        beta_max, gamma_min, gamma_max = 0.0, math.inf, -math.inf
        for result in ok:
            for tensors in result.intrinsic.values():
                beta_max = max(beta_max, float(np.abs(tensors.beta).max()))
                diagonal = [float(tensors.gamma[a, a, a, a]) for a in range(2)]
                gamma_min = min(gamma_min, *diagonal)
                gamma_max = max(gamma_max, *diagonal)
        audited = [r for r in ok if r.deviations]
        summary = {
            "topology": config.topology,
            "method": config.method,
            "samples": len(results),
            "failures": len(results) - len(ok),
            "seed": config.seed,
            "modes": config.modes,
            "grid": config.grid,
            "distributions": {
                "length": {"kind": "uniform", "range": list(config.length_range)},
                "angle_deg": {"kind": "uniform", "range": list(config.angle_range)},
            },
            "max_abs_beta_intrinsic": beta_max,
            "min_gamma_diagonal_intrinsic": gamma_min if ok else None,
            "max_gamma_diagonal_intrinsic": gamma_max if ok else None,
            "violations": sum(1 for r in ok if r.flagged),
            "audited_samples": len(audited),
        }
        if audited:
            summary["audit_max_deviation"] = {
                "beta": max(r.deviations["beta"] for r in audited),
                "gamma": max(r.deviations["gamma"] for r in audited),
            }
        if summary["violations"]:
            self.logger.warning(f"{summary['violations']} Monte Carlo samples violate intrinsic bounds")
        self.logger.info(
            f"Monte Carlo done: max|beta_int|={beta_max:.6f}, min gamma_int={summary['min_gamma_diagonal_intrinsic']}, "
            f"{summary['failures']} failures"
        )
        return summary

    @staticmethod
    def _sample_columns(topology):
        n = TOPOLOGY_ARMS[topology]
        return ["sample", "seed"] + [f"length_{p}" for p in range(1, n + 1)] + [f"angle_{p}" for p in range(1, n + 1)]

    def _median_time(self, work, repeats):
        work()  # warm-up
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            work()
            times.append(time.perf_counter() - start)
        return statistics.median(times)

    def run_benchmark(self, config, graph=None):
        config.validate()
        graph = graph or load_graph(config.graph_path)
        self.logger.info(f"Benchmarking SOS against DL on '{graph.name}' for M in {list(config.bench_modes)}")

        def dl_work():
            spectrum = self.solver.find_spectrum(graph, 2)
            self.dl_engine.compute(graph, spectrum.ground_state(), spectrum.e10)

        t_dl = self._median_time(dl_work, config.repeats)
        rows = []
        for modes in config.bench_modes:

            def sos_work():
                spectrum = self.solver.find_spectrum(graph, modes)
                self.sos_engine.compute(spectrum, graph)

            spectrum = self.solver.find_spectrum(graph, modes)
            mx, my = self.sos_engine.moments(spectrum, graph)

            def gamma_work():
                gamma_sos(mx, my, spectrum.energies)

            t_sos = self._median_time(sos_work, config.repeats)
            t_gamma = self._median_time(gamma_work, config.repeats)
            rows.append(
                {
                    "modes": modes,
                    "basis_size": spectrum.n_modes,
                    "t_sos_s": t_sos,
                    "t_sos_gamma_s": t_gamma,
                    "t_dl_s": t_dl,
                    "speedup": t_sos / t_dl,
                }
            )
            self.logger.info(f"M={modes}: SOS {t_sos:.4f}s, DL {t_dl:.4f}s, speedup {t_sos / t_dl:.1f}")

        if config.out:
            write_csv(config.out, rows)
            self.logger.info(f"Benchmark table written to {config.out}")
        return rows


def _summary_path(out):
    root, _ = os.path.splitext(out)
    return f"{root}.summary.json"


_WORKER_RUNNER = None


def _monte_carlo_sample(task):
    global _WORKER_RUNNER
    config = task[3]
    if _WORKER_RUNNER is None:
        logger = Logger(log_file=None, name="qgnlo.worker", console_level=logging.WARNING)
        _WORKER_RUNNER = QGNLORunner(logger, grid=config.grid)
    return _WORKER_RUNNER.monte_carlo_sample(*task)


def _pair(text, cast=float):
    parts = [cast(part) for part in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"Expected two comma-separated values, got '{text}'")
    return tuple(parts)


def _mode_list(text):
    return tuple(int(part) for part in text.split(","))


def build_parser():
    parser = argparse.ArgumentParser(description="Hyperpolarizabilities of planar quantum graphs by SOS and Dalgarno-Lewis.")
    parser.add_argument("--log-file", default=None, help="Path to the log file (default Logs/qgnlo.log)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, graph=True, modes=True):
        if graph:
            p.add_argument("--graph", "-g", required=True, help="Path to the graph spec JSON file")
        p.add_argument("--method", choices=["sos", "dl", "both"], default="both")
        if modes:
            p.add_argument("--modes", type=int, default=30, help="Number of modes for the sum over states")
        p.add_argument("--grid", type=int, default=2001, help="Samples per edge (odd)")
        p.add_argument("--out", "-o", default=None, help="Output path")

    run = sub.add_parser("run", help="Evaluate one graph")
    common(run)
    run.add_argument("--dump-fields", default=None, help="Directory for per-edge DL field CSV")

    sweep = sub.add_parser("sweep", help="Rotate one edge through a range of angles")
    common(sweep)
    sweep.add_argument("--rotate-edge", type=int, required=True, help="1-based id of the rotating edge")
    sweep.add_argument("--steps", type=int, default=73)
    sweep.add_argument("--start", type=float, default=0.0, help="First angle in degrees")
    sweep.add_argument("--stop", type=float, default=360.0, help="Last angle in degrees")

    mc = sub.add_parser("mc", help="Monte Carlo ensemble of random geometries")
    common(mc, graph=False)
    mc.set_defaults(method="dl")
    mc.add_argument("--topology", choices=sorted(TOPOLOGY_ARMS), required=True)
    mc.add_argument("--samples", type=int, default=1000)
    mc.add_argument("--seed", type=int, default=42)
    mc.add_argument("--length-range", type=_pair, default=(0.1, 1.0), help="low,high")
    mc.add_argument("--angle-range", type=_pair, default=(0.0, 360.0), help="low,high in degrees")
    mc.add_argument("--audit-samples", type=int, default=0, help="Leading samples also checked with both methods")
    mc.add_argument("--workers", type=int, default=None, help="Worker processes (default QGNLO_WORKERS or 1)")

    bench = sub.add_parser("bench", help="Wall-clock SOS vs DL comparison")
    common(bench, modes=False)
    bench.set_defaults(method="both")
    bench.add_argument("--modes", type=_mode_list, default=(10, 20, 30, 40, 50), help="Comma-separated mode counts")
    bench.add_argument("--repeats", type=int, default=5)
    return parser


def config_from_args(args):
    config = RunConfig(
        graph_path=getattr(args, "graph", None),
        method=args.method,
        grid=args.grid,
        out=args.out,
    )
    if args.command == "bench":
        config.bench_modes = args.modes
        config.repeats = args.repeats
    else:
        config.modes = args.modes
    if args.command == "run":
        config.dump_fields = args.dump_fields
    if args.command == "sweep":
        config.rotate_edge = args.rotate_edge
        config.steps = args.steps
        config.sweep_start = args.start
        config.sweep_stop = args.stop
    if args.command == "mc":
        config.topology = args.topology
        config.samples = args.samples
        config.seed = args.seed
        config.length_range = args.length_range
        config.angle_range = args.angle_range
        config.audit_samples = args.audit_samples
        workers = args.workers if args.workers is not None else os.getenv("QGNLO_WORKERS", "1")
        try:
            config.workers = int(workers)
        except ValueError:
            raise ConfigError(f"QGNLO_WORKERS must be an integer, got '{workers}'") from None
    return config.validate()


def main(argv=None):
    load_dotenv()
    args = build_parser().parse_args(argv)
    logger = Logger(args.log_file or os.getenv("QGNLO_LOG_FILE", "Logs/qgnlo.log"))

    try:
        config = config_from_args(args)
        runner = QGNLORunner(logger, grid=config.grid)
        if args.command == "run":
            runner.run_single(config)
        elif args.command == "sweep":
            runner.run_sweep(config)
        elif args.command == "mc":
            runner.run_monte_carlo(config)
        else:
            runner.run_benchmark(config)
    except QGNLOError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    except OSError as e:
        logger.error(f"I/O error during {args.command}: {e}")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
