"""Scenario files: flat ``[section]`` / ``key = value`` text.

Example::

    [topology]
    links = 4
    edges = 1-2 1-3 1-4          # or: graph = g.txt | star = 3 | complete = 5
                                 # or: network = net.txt / generate = nodes=30 area=4 range=1 density=0.3
    model = khop 2               # geometric only: primary | khop K | phy SNR KAPPA

    [traffic]
    default = kind=bernoulli q=0.2
    link1 = kind=batch values=0,3 probs=0.9,0.1
    link2 = kind=markov on_off=0.2 off_on=0.1 batch=2 bound=2
    group1 = mode=staggered links=2,3,4 q=0.3,0.3,0.3

    [scheduler]
    kind = fixed                 # fixed | stable | randomized | lqf | maxweight
    ranks = 2 4 3 1              # or: priority = p.txt ; randomized: decomposition = d.txt

    [sim]
    slots = 100000
    seed = 1

Unknown sections or keys are errors, reported with file and line.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from prisched.geometry import GeometricNetwork, KHop, Phy, Primary, build_interference, generate_network
from prisched.graph import InterferenceGraph
from prisched.traffic import ArrivalModel, Batch, Bernoulli, CorrelatedGroup, MarkovOnOff

SECTIONS = {
    "topology": {"links", "edges", "graph", "star", "complete", "network", "generate", "model"},
    "traffic": None,  # default, link<i>, group<k>
    "scheduler": {"kind", "ranks", "priority", "decomposition", "epsilon", "tol"},
    "sim": {"slots", "reps", "seed", "thresholds", "burn_in", "trace"},
    "delay": {"theta", "buffer", "eps", "empirical"},
    "out": {"dir", "summary", "trace", "priority", "decomposition", "exponents"},
}


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None, field: str | None = None):
        where = source if line is None else f"{source}:{line}"
        what = f" [{field}]" if field else ""
        super().__init__(f"{where}:{what} {message}")
        self.line = line
        self.field = field


@dataclass
class _Entry:
    value: str
    line: int


@dataclass
class RawConfig:
    source: str
    base: Path
    sections: dict[str, dict[str, _Entry]]

    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {})

    def error(self, section: str, key: str, message: str) -> ConfigError:
        entry = self.sections.get(section, {}).get(key)
        return ConfigError(message, self.source, entry.line if entry else None, f"{section}.{key}")

    def get(self, section: str, key: str, default: str | None = None) -> str | None:
        entry = self.sections.get(section, {}).get(key)
        return entry.value if entry is not None else default

    def require(self, section: str, key: str) -> str:
        value = self.get(section, key)
        if value is None:
            raise ConfigError("missing required field", self.source, None, f"{section}.{key}")
        return value

    def number(self, section: str, key: str, kind=float, default=None):
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                return self.require(section, key)
            return default
        try:
            return kind(raw)
        except ValueError:
            raise self.error(section, key, f"expected {kind.__name__}, got {raw!r}") from None

    def numbers(self, section: str, key: str, kind=float) -> list | None:
        raw = self.get(section, key)
        if raw is None:
            return None
        try:
            return [kind(t) for t in raw.replace(",", " ").split()]
        except ValueError:
            raise self.error(section, key, f"expected a list of {kind.__name__} values") from None

    def flag(self, section: str, key: str) -> bool:
        raw = (self.get(section, key) or "false").lower()
        if raw not in ("true", "false", "yes", "no", "1", "0"):
            raise self.error(section, key, f"expected true or false, got {raw!r}")
        return raw in ("true", "yes", "1")

    def path(self, section: str, key: str) -> Path:
        return self.base / self.require(section, key)


def parse_config(text: str, source: str = "<config>", base: Path | None = None) -> RawConfig:
    sections: dict[str, dict[str, _Entry]] = {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[(\w+)\]", line)
        if m:
            current = m.group(1)
            if current not in SECTIONS:
                raise ConfigError(f"unknown section [{current}]", source, no)
            if current in sections:
                raise ConfigError(f"section [{current}] repeated", source, no)
            sections[current] = {}
            continue
        if current is None:
            raise ConfigError("entry outside any section", source, no)
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", source, no)
        allowed = SECTIONS[current]
        if allowed is not None and key not in allowed:
            raise ConfigError("unknown key", source, no, f"{current}.{key}")
        if allowed is None and not re.fullmatch(r"default|link\d+|group\d+", key):
            raise ConfigError("expected default, link<i> or group<k>", source, no, f"{current}.{key}")
        if key in sections[current]:
            raise ConfigError("key repeated", source, no, f"{current}.{key}")
        sections[current][key] = _Entry(value, no)
    return RawConfig(source, base or Path("."), sections)


def load_config(path: str | Path) -> RawConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path), path.parent)


def _kv(raw: RawConfig, section: str, key: str) -> dict[str, str]:
    out = {}
    for tok in raw.require(section, key).split():
        k, sep, v = tok.partition("=")
        if not sep:
            raise raw.error(section, key, f"expected name=value, got {tok!r}")
        out[k] = v
    return out


def _model_from(raw: RawConfig, key: str) -> ArrivalModel:
    spec = _kv(raw, "traffic", key)
    kind = spec.pop("kind", None)
    try:
        bound = int(spec.pop("bound")) if "bound" in spec else None
        if kind == "bernoulli":
            model = Bernoulli(float(spec.pop("q")))
        elif kind == "batch":
            values = tuple(int(v) for v in spec.pop("values").split(","))
            probs = tuple(float(p) for p in spec.pop("probs").split(","))
            model = Batch(values, probs, bound)
        elif kind == "markov":
            model = MarkovOnOff(float(spec.pop("on_off")), float(spec.pop("off_on")), int(spec.pop("batch", "1")), bound)
        else:
            raise raw.error("traffic", key, f"unknown or missing kind {kind!r} (bernoulli, batch, markov)")
    except KeyError as exc:
        raise raw.error("traffic", key, f"missing parameter {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise raw.error("traffic", key, str(exc)) from None
    if kind == "bernoulli" and bound not in (None, 1):
        raise raw.error("traffic", key, "Bernoulli arrivals have bound 1")
    if spec:
        raise raw.error("traffic", key, f"unexpected parameters {sorted(spec)}")
    return model


def build_models(raw: RawConfig, n: int) -> list[ArrivalModel]:
    """Per-link models from ``[traffic]``; links without an entry use ``default``."""
    models: list[ArrivalModel | None] = [None] * n
    for key in raw.sections.get("traffic", {}):
        if key.startswith("link"):
            i = int(key[4:])
            if not 1 <= i <= n:
                raise raw.error("traffic", key, f"link {i} out of range 1..{n}")
            models[i - 1] = _model_from(raw, key)
    for key in sorted(k for k in raw.sections.get("traffic", {}) if k.startswith("group")):
        spec = _kv(raw, "traffic", key)
        try:
            links = [int(t) for t in spec["links"].split(",")]
            rates = [float(t) for t in spec["q"].split(",")]
            group = CorrelatedGroup(tuple(rates), spec.get("mode", "synchronized"), int(key[5:]))
        except KeyError as exc:
            raise raw.error("traffic", key, f"missing parameter {exc.args[0]!r}") from None
        except ValueError as exc:
            raise raw.error("traffic", key, str(exc)) from None
        if len(links) != len(rates):
            raise raw.error("traffic", key, "links and q need the same length")
        for i, member in zip(links, group.members()):
            if not 1 <= i <= n:
                raise raw.error("traffic", key, f"link {i} out of range 1..{n}")
            if models[i - 1] is not None:
                raise raw.error("traffic", key, f"link {i} already has an arrival model")
            models[i - 1] = member
    if raw.has("traffic", "default"):
        default = _model_from(raw, "default")
        models = [m if m is not None else default for m in models]
    missing = [i + 1 for i, m in enumerate(models) if m is None]
    if missing:
        raise ConfigError(f"no arrival model for links {missing}", raw.source, None, "traffic")
    return models  # type: ignore[return-value]


def _interference_model(raw: RawConfig):
    tok = raw.require("topology", "model").split()
    try:
        if tok[0] == "primary" and len(tok) == 1:
            return Primary()
        if tok[0] == "khop" and len(tok) == 2:
            return KHop(float(tok[1]))
        if tok[0] == "phy" and len(tok) == 3:
            return Phy(float(tok[1]), float(tok[2]))
    except ValueError as exc:
        raise raw.error("topology", "model", str(exc)) from None
    raise raw.error("topology", "model", "expected 'primary', 'khop K' or 'phy SNR KAPPA'")


def build_topology(raw: RawConfig, seed: int | None) -> tuple[InterferenceGraph, GeometricNetwork | None]:
    from prisched.formats import FormatError, parse_graph, parse_network

    sources = [k for k in ("links", "graph", "star", "complete", "network", "generate") if raw.has("topology", k)]
    if len(sources) != 1:
        raise ConfigError(
            "give exactly one of links (with edges), graph, star, complete, network, generate",
            raw.source,
            None,
            "topology.links",
        )
    kind = sources[0]
    try:
        if kind == "links":
            n = raw.number("topology", "links", int)
            edges = []
            for tok in (raw.get("topology", "edges") or "").split():
                a, sep, b = tok.partition("-")
                if not sep:
                    raise raw.error("topology", "edges", f"expected i-j, got {tok!r}")
                edges.append(f"edge {a} {b}")
            return parse_graph("\n".join([f"links {n}", *edges])), None
        if kind == "graph":
            return parse_graph(raw.path("topology", "graph").read_text()), None
        if kind == "star":
            return InterferenceGraph.star(raw.number("topology", "star", int)), None
        if kind == "complete":
            return InterferenceGraph.complete(raw.number("topology", "complete", int)), None
        if kind == "network":
            net = parse_network(raw.path("topology", "network").read_text())
        else:
            if seed is None:
                raise ConfigError("a seed is required to generate a network", raw.source, None, "sim.seed")
            spec = _kv(raw, "topology", "generate")
            net = generate_network(
                int(spec["nodes"]), float(spec["area"]), float(spec["range"]), float(spec["density"]), seed
            )
    except FormatError as exc:
        raise raw.error("topology", kind, str(exc)) from None
    except OSError as exc:
        raise raw.error("topology", kind, f"cannot read {exc.filename}: {exc.strerror}") from None
    except KeyError as exc:
        raise raw.error("topology", kind, f"missing parameter {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise raw.error("topology", kind, str(exc)) from None
    return build_interference(net, _interference_model(raw)), net


@dataclass
class SimSettings:
    slots: int
    reps: int = 1
    seed: int | None = None
    thresholds: tuple[int, ...] = ()
    burn_in: float = 0.1
    trace: bool = False


def sim_settings(raw: RawConfig, seed_override: int | None = None) -> SimSettings:
    if seed_override is not None:
        seed = seed_override
    else:
        seed = raw.number("sim", "seed", int) if raw.has("sim", "seed") else None
    s = SimSettings(
        slots=raw.number("sim", "slots", int),
        reps=raw.number("sim", "reps", int, default=1),
        seed=seed,
        thresholds=tuple(raw.numbers("sim", "thresholds", int) or ()),
        burn_in=raw.number("sim", "burn_in", float, default=0.1),
        trace=raw.flag("sim", "trace"),
    )
    if s.slots < 1:
        raise raw.error("sim", "slots", "must be positive")
    if s.reps < 1:
        raise raw.error("sim", "reps", "must be positive")
    if not 0 <= s.burn_in < 1:
        raise raw.error("sim", "burn_in", "must lie in [0, 1)")
    return s


def delay_targets(raw: RawConfig, n: int) -> list[float]:
    """``[delay] theta`` directly, or per-link ``buffer``/``eps`` pairs mapped to ``-log(eps)/buffer``."""
    from prisched.delay import qos_to_theta

    theta = raw.numbers("delay", "theta")
    if theta is not None:
        if len(theta) != n:
            raise raw.error("delay", "theta", f"expected {n} targets, got {len(theta)}")
        if any(not (math.isfinite(t) and t >= 0) for t in theta):
            raise raw.error("delay", "theta", "targets must be finite and nonnegative")
        return theta
    buffers = raw.numbers("delay", "buffer")
    eps = raw.numbers("delay", "eps")
    if buffers is None or eps is None:
        raise ConfigError("give theta, or buffer and eps", raw.source, None, "delay.theta")
    if len(buffers) != n or len(eps) != n:
        raise raw.error("delay", "buffer", f"buffer and eps need {n} entries each")
    out = []
    for b, e in zip(buffers, eps):
        # a zero buffer entry means no delay requirement
        if b == 0:
            out.append(0.0)
            continue
        try:
            out.append(qos_to_theta(b, e))
        except ValueError as exc:
            raise raw.error("delay", "buffer", str(exc)) from None
    return out


@dataclass
class OutputPaths:
    dir: Path
    names: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Path:
        return self.dir / self.names[key]


def output_paths(raw: RawConfig, override: str | None = None) -> OutputPaths:
    names = {
        "summary": "summary.csv",
        "trace": "trace.csv",
        "priority": "priority.txt",
        "decomposition": "decomposition.txt",
        "exponents": "exponents.csv",
    }
    for key in names:
        names[key] = raw.get("out", key, names[key])
    d = Path(override) if override is not None else raw.base / raw.get("out", "dir", ".")
    return OutputPaths(d, names)
