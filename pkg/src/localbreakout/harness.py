"""Parameter sweeps over the arrival or departure probability."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import multiprocessing
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from xml.etree import ElementTree as ET

from .delay import DelayModel
from .params import InvalidParams, SystemParams
from .policies import PolicySpec, bind
from .simulator import PRNG_ALGORITHM, SimConfig, run
from .solver import Model, policy_gain, relative_value_iteration, threshold_of

AXES = ("p", "q")


class SweepError(RuntimeError):
    """A grid point failed; no output is written."""


@dataclass(frozen=True)
class ExperimentConfig:
    params: SystemParams = field(default_factory=SystemParams)
    delay: DelayModel = field(default_factory=DelayModel)
    axis: str = "p"
    start: float = 0.01
    stop: float = 0.09
    step: float = 0.01
    fixed: float | None = 0.05
    policies: tuple[PolicySpec, ...] = (PolicySpec("mdp"), PolicySpec("myopic"))
    sim: SimConfig = field(default_factory=SimConfig)
    out: str | None = None
    svg: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidParams(f"sweep axis must be one of {AXES}, got {self.axis!r}")
        if not self.step > 0:
            raise InvalidParams("sweep step must be positive")
        if self.stop < self.start:
            raise InvalidParams("sweep stop is below start")
        if not self.policies:
            raise InvalidParams("at least one policy is required")
        object.__setattr__(self, "policies", tuple(PolicySpec.parse(s) for s in self.policies))
        names = [s.name for s in self.policies]
        if len(set(names)) != len(names):
            raise InvalidParams(f"duplicate policies in {names}")
        if self.workers < 1:
            raise InvalidParams("workers must be at least 1")
        for v in self.grid():
            if not 0.0 < v < 1.0:
                raise InvalidParams(f"sweep value {v} not in (0, 1)")

    def grid(self) -> list[float]:
        n = round((self.stop - self.start) / self.step)
        return [round(self.start + i * self.step, 12) for i in range(n + 1)]

    def point_params(self, value: float) -> SystemParams:
        other = "q" if self.axis == "p" else "p"
        changes = {self.axis: value}
        if self.fixed is not None:
            changes[other] = self.fixed
        return self.params.with_(**changes)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "delay": self.delay.to_dict(),
            "sweep": {"axis": self.axis, "start": self.start, "stop": self.stop,
                      "step": self.step, "fixed": self.fixed},
            "policies": [s.to_json() for s in self.policies],
            "sim": self.sim.to_dict(),
            "out": self.out,
            "svg": self.svg,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        kwargs = {}
        if "params" in data:
            kwargs["params"] = SystemParams.from_dict(data.pop("params"))
        if "delay" in data:
            kwargs["delay"] = DelayModel.from_dict(data.pop("delay"))
        if "sim" in data:
            kwargs["sim"] = SimConfig.from_dict(data.pop("sim"))
        kwargs.update(data.pop("sweep", {}))
        if "policies" in data:
            kwargs["policies"] = tuple(PolicySpec.parse(s) for s in data.pop("policies"))
        for key in ("out", "svg", "workers"):
            if key in data:
                kwargs[key] = data.pop(key)
        if data:
            raise InvalidParams(f"unknown config keys: {sorted(data)}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


@dataclass
class SweepRow:
    axis: str
    value: float
    gains: dict[str, float]
    sim_success: dict[str, float]
    ci95: dict[str, float]
    threshold: int | None
    threshold_is_clean: bool


def point_seed(master_seed: int, axis: str, value: float) -> int:
    """Seed of one grid point, independent of execution order."""
    digest = hashlib.blake2b(f"{master_seed}|{axis}|{value!r}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def evaluate_point(cfg: ExperimentConfig, value: float) -> SweepRow:
    params = cfg.point_params(value)
    model = Model.build(params, cfg.delay)
    solved = relative_value_iteration(model)
    if not solved.converged:
        raise SweepError(
            f"solve did not converge at {cfg.axis}={value} after {solved.iterations} iterations")
    seed = point_seed(cfg.sim.seed, cfg.axis, value)
    gains, sims, cis = {}, {}, {}
    for index, spec in enumerate(cfg.policies):
        table = bind(spec, params, cfg.delay, solved).table
        gains[spec.name] = policy_gain(params, cfg.delay, table, model)
        sim_cfg = replace(cfg.sim, seed=seed, stream=index)
        report = run(params, cfg.delay, table, sim_cfg)
        sims[spec.name] = report.success_rate
        cis[spec.name] = report.ci_halfwidth_95
    shape = threshold_of(solved.policy)
    return SweepRow(cfg.axis, value, gains, sims, cis, shape.threshold, shape.clean)


def _evaluate(args):
    cfg, value = args
    try:
        return evaluate_point(cfg, value)
    except SweepError:
        raise
    except Exception as exc:
        raise SweepError(f"grid point {cfg.axis}={value} failed: {exc}") from exc


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> list[SweepRow]:
    """Solve, bind and simulate every grid point; rows come back in grid order."""
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, v) for v in cfg.grid()]
    if workers <= 1 or len(jobs) == 1:
        return [_evaluate(job) for job in jobs]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs)), mp_context=ctx) as pool:
        return list(pool.map(_evaluate, jobs))


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def csv_text(rows: list[SweepRow]) -> str:
    if not rows:
        raise ValueError("no rows to write")
    names = list(rows[0].gains)
    header = ["sweep_param", "sweep_value"]
    for name in names:
        header += [f"{name}_gain", f"{name}_sim_success", f"{name}_ci95"]
    header += ["threshold", "threshold_is_clean"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        line = [row.axis, _fmt(row.value)]
        for name in names:
            line += [_fmt(row.gains[name]), _fmt(row.sim_success[name]), _fmt(row.ci95[name])]
        line += ["" if row.threshold is None else row.threshold,
                 "true" if row.threshold_is_clean else "false"]
        writer.writerow(line)
    return buf.getvalue()


def atomic_write(path, text: str) -> None:
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_csv(rows: list[SweepRow], path) -> None:
    """Write the sweep table (header plus one line per grid point)."""
    atomic_write(path, csv_text(rows))


def sweep_metadata(cfg: ExperimentConfig) -> dict:
    return {
        "gain_units": f"long-run reward per packet with reward_unit={cfg.params.reward_unit}; "
                      "with reward_unit=1 this is the success probability",
        "ci95": "normal-approximation half-width from batch means",
        "prng": PRNG_ALGORITHM,
        "point_seed": "blake2b-64 of 'master_seed|axis|value'; policy i uses stream i",
        "config": cfg.to_dict(),
    }


# -- SVG charts ---------------------------------------------------------------

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
AXIS_LABELS = {"p": "arrival probability p", "q": "departure probability q"}


def _scale(lo: float, hi: float, a: float, b: float):
    if hi == lo:
        return lambda x: (a + b) / 2
    return lambda x: a + (x - lo) / (hi - lo) * (b - a)


def svg_text(rows: list[SweepRow], kind: str = "reward") -> str:
    if not rows:
        raise ValueError("no rows to plot")
    if kind == "reward":
        series = {name: [r.gains[name] for r in rows] for name in rows[0].gains}
        ylabel = "average reward per packet"
    elif kind == "threshold":
        series = {"mdp threshold": [float(r.threshold if r.threshold is not None else -1)
                                    for r in rows]}
        ylabel = "threshold (queue length)"
    else:
        raise ValueError(f"unknown chart kind {kind!r}")

    xs = [r.value for r in rows]
    ys = [y for ys in series.values() for y in ys]
    ylo, yhi = min(ys + [0.0]), max(ys)
    if yhi == ylo:
        yhi = ylo + 1.0
    sx = _scale(min(xs), max(xs), LEFT, WIDTH - RIGHT)
    sy = _scale(ylo, yhi, HEIGHT - BOTTOM, TOP)

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                     width=str(WIDTH), height=str(HEIGHT), viewBox=f"0 0 {WIDTH} {HEIGHT}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="white")
    x0, x1, y0, y1 = LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP
    axes = {"stroke": "black", "stroke-width": "1"}
    ET.SubElement(svg, "line", x1=str(x0), y1=str(y0), x2=str(x1), y2=str(y0), **axes)
    ET.SubElement(svg, "line", x1=str(x0), y1=str(y0), x2=str(x0), y2=str(y1), **axes)
    for x in sorted(set(xs)):
        label = ET.SubElement(svg, "text", x=f"{sx(x):.2f}", y=str(y0 + 18),
                              **{"text-anchor": "middle", "font-size": "11"})
        label.text = f"{x:g}"
    for y in (ylo, (ylo + yhi) / 2, yhi):
        label = ET.SubElement(svg, "text", x=str(x0 - 6), y=f"{sy(y) + 4:.2f}",
                              **{"text-anchor": "end", "font-size": "11"})
        label.text = f"{y:.3g}"
    xl = ET.SubElement(svg, "text", x=str((x0 + x1) // 2), y=str(HEIGHT - 15),
                       **{"text-anchor": "middle", "font-size": "13"})
    xl.text = AXIS_LABELS[rows[0].axis]
    yl = ET.SubElement(svg, "text", x="18", y=str((y0 + y1) // 2),
                       transform=f"rotate(-90 18 {(y0 + y1) // 2})",
                       **{"text-anchor": "middle", "font-size": "13"})
    yl.text = ylabel

    for i, (name, values) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        group = ET.SubElement(svg, "g", {"class": "series", "data-name": name})
        pts = [(sx(x), sy(y)) for x, y in zip(xs, values)]
        if len(pts) > 1:
            ET.SubElement(group, "polyline", fill="none", stroke=color,
                          points=" ".join(f"{a:.2f},{b:.2f}" for a, b in pts),
                          **{"stroke-width": "2"})
        for a, b in pts:
            ET.SubElement(group, "circle", cx=f"{a:.2f}", cy=f"{b:.2f}", r="3", fill=color)
        ly = TOP + 18 * i
        ET.SubElement(svg, "line", x1=str(x1 + 15), y1=str(ly), x2=str(x1 + 35), y2=str(ly),
                      stroke=color, **{"stroke-width": "2"})
        legend = ET.SubElement(svg, "text", x=str(x1 + 40), y=str(ly + 4), **{"font-size": "11"})
        legend.text = name
    return ET.tostring(svg, encoding="unicode") + "\n"


def emit_plot(rows: list[SweepRow], path, kind: str = "reward") -> None:
    """Write a standalone SVG line chart of gains or MDP thresholds."""
    atomic_write(path, svg_text(rows, kind))
