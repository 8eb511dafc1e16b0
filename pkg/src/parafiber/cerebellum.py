"""Construction of the cerebellar control network.

Layout (per side L/R, sides share the input layers):

* ``MoF_act`` and ``MoF_set`` source populations carry the population-coded
  actual angle and set point; together they form one 32-line mossy-fiber
  index space.
* 256 granule cells each sample a unique combination of 4 mossy fibers and
  recode the input sparsely; their axons (parallel fibers) reach every
  Purkinje cell of both sides through plastic synapses.
* Per side: 8 Purkinje cells inhibit 4 deep-nuclei cells; the deep nuclei
  are also excited by all 32 mossy fibers, so learning shapes the
  inhibitory corrective term.  A single teaching line per side (inferior
  olive) contacts that side's Purkinje cells and gates depression of the
  parallel-fiber weights.

There are deliberately no interneurons, no granule-layer recurrence and no
feedback onto the teaching lines; :func:`validate_topology` enforces both
the required counts and these absences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .engine import EXC, INH, LifParams, Network, NumericMode, Projection, make_projection
from .errors import ConfigError, TopologyError
from .plasticity import KernelLut, PlasticityState, build_kernel_lut

SIDES = ("L", "R")


@dataclass(frozen=True)
class CerebellumConfig:
    n_mof_act: int = 16
    n_mof_set: int = 16
    n_grc: int = 256
    n_puc: int = 8  # per side
    n_dcn: int = 4  # per side
    mof_per_grc: int = 4
    seed: int = 0

    # static weights (nA) and the plastic range
    w_mof_grc: float = 5.0
    w_mof_dcn: float = 5.0
    w_puc_dcn: float = 0.32
    w_ino_puc: float = 1.0
    w_max: float = 4.0
    init_lo: float = 0.2  # fraction of w_max
    init_hi: float = 0.8
    delay_ms: float = 1.0
    mirror_sides: bool = False  # use one weight draw for both sides (symmetry checks)

    lif_grc: LifParams = field(default_factory=LifParams)
    lif_puc: LifParams = field(default_factory=LifParams)
    lif_dcn: LifParams = field(default_factory=LifParams)

    def __post_init__(self) -> None:
        if min(self.n_mof_act, self.n_mof_set, self.n_grc, self.n_puc, self.n_dcn) < 1:
            raise ConfigError("all population sizes must be >= 1")
        if not 0 < self.mof_per_grc <= self.n_mof_total:
            raise ConfigError("mof_per_grc out of range")
        if self.n_grc > math.comb(self.n_mof_total, self.mof_per_grc):
            raise ConfigError(
                f"cannot give {self.n_grc} granule cells distinct combinations of "
                f"{self.mof_per_grc} out of {self.n_mof_total} mossy fibers"
            )
        if not 0.0 <= self.init_lo < self.init_hi <= 1.0:
            raise ConfigError("require 0 <= init_lo < init_hi <= 1")

    @property
    def n_mof_total(self) -> int:
        return self.n_mof_act + self.n_mof_set


@dataclass
class CerebellarSystem:
    """A built network plus the handles the loop needs to drive it."""

    network: Network
    config: CerebellumConfig
    plasticity: dict[str, PlasticityState]  # keyed by side
    grc_combos: list[tuple[int, ...]]  # combined mossy-fiber indices per granule cell

    def population_offset(self, name: str) -> int:
        return self.network.population(name).start

    def reset_weights(self, rng: np.random.Generator) -> None:
        """Redraw the plastic weights from the configured init range."""
        cfg = self.config
        for side in SIDES:
            state = self.plasticity[side]
            state.weights[:] = rng.uniform(cfg.init_lo * cfg.w_max, cfg.init_hi * cfg.w_max, len(state.weights))


def draw_unique_combinations(
    n_total: int, k: int, count: int, rng: np.random.Generator
) -> list[tuple[int, ...]]:
    """Draw ``count`` pairwise distinct k-subsets of range(n_total) by seeded
    rejection sampling."""
    if count > math.comb(n_total, k):
        raise ConfigError(f"only {math.comb(n_total, k)} distinct {k}-subsets exist")
    seen: set[tuple[int, ...]] = set()
    combos: list[tuple[int, ...]] = []
    while len(combos) < count:
        combo = tuple(sorted(int(i) for i in rng.choice(n_total, size=k, replace=False)))
        if combo not in seen:
            seen.add(combo)
            combos.append(combo)
    return combos


def build_network(
    cfg: CerebellumConfig,
    lut: KernelLut | None = None,
    dt_ms: float = 1.0,
    mode: NumericMode | None = None,
) -> CerebellarSystem:
    """Build the full two-sided network, deterministic for a given seed."""
    rng = np.random.default_rng(cfg.seed)
    lut = lut or build_kernel_lut(w_max=cfg.w_max)
    if abs(lut.w_max - cfg.w_max) > 1e-12:
        raise ConfigError("plasticity w_max must match the cerebellum weight bound")
    net = Network(dt=dt_ms, mode=mode)
    delay = max(1, int(round(cfg.delay_ms / dt_ms)))

    net.add_population("MoF_act", cfg.n_mof_act, kind="source")
    net.add_population("MoF_set", cfg.n_mof_set, kind="source")
    net.add_population("GrC", cfg.n_grc, params=cfg.lif_grc)
    for side in SIDES:
        net.add_population(f"PuC_{side}", cfg.n_puc, params=cfg.lif_puc)
        net.add_population(f"DCN_{side}", cfg.n_dcn, params=cfg.lif_dcn)
        net.add_population(f"InO_{side}", 1, kind="source")

    # granule layer: one unique mossy-fiber combination per cell
    combos = draw_unique_combinations(cfg.n_mof_total, cfg.mof_per_grc, cfg.n_grc, rng)
    syn_act, syn_set = [], []
    for g, combo in enumerate(combos):
        for m in combo:
            if m < cfg.n_mof_act:
                syn_act.append((m, g, cfg.w_mof_grc, delay))
            else:
                syn_set.append((m - cfg.n_mof_act, g, cfg.w_mof_grc, delay))
    net.add_projection(make_projection("MoF_act->GrC", "MoF_act", "GrC", syn_act, sign=EXC))
    net.add_projection(make_projection("MoF_set->GrC", "MoF_set", "GrC", syn_set, sign=EXC))

    plastic_states: dict[str, PlasticityState] = {}
    mirror_weights: np.ndarray | None = None
    for side in SIDES:
        # parallel fibers: all-to-all, plastic, uniformly drawn initial weights
        pf = [(g, pc, 0.0, delay) for g in range(cfg.n_grc) for pc in range(cfg.n_puc)]
        proj = make_projection(f"GrC->PuC_{side}", "GrC", f"PuC_{side}", pf, sign=EXC, plastic=True)
        if cfg.mirror_sides:
            if mirror_weights is None:
                mirror_weights = rng.uniform(cfg.init_lo * cfg.w_max, cfg.init_hi * cfg.w_max, proj.n_synapses)
            proj.weight[:] = mirror_weights
        else:
            proj.weight[:] = rng.uniform(cfg.init_lo * cfg.w_max, cfg.init_hi * cfg.w_max, proj.n_synapses)
        proj_index = net.add_projection(proj)
        state = PlasticityState(lut, proj.weight, proj.pre, cfg.n_grc, tick_ms=dt_ms)
        net.bind_plasticity(proj_index, f"InO_{side}", state)
        plastic_states[side] = state

        mof_dcn_act = [(m, d, cfg.w_mof_dcn, delay) for m in range(cfg.n_mof_act) for d in range(cfg.n_dcn)]
        mof_dcn_set = [(m, d, cfg.w_mof_dcn, delay) for m in range(cfg.n_mof_set) for d in range(cfg.n_dcn)]
        net.add_projection(make_projection(f"MoF_act->DCN_{side}", "MoF_act", f"DCN_{side}", mof_dcn_act, sign=EXC))
        net.add_projection(make_projection(f"MoF_set->DCN_{side}", "MoF_set", f"DCN_{side}", mof_dcn_set, sign=EXC))

        puc_dcn = [(pc, d, cfg.w_puc_dcn, delay) for pc in range(cfg.n_puc) for d in range(cfg.n_dcn)]
        net.add_projection(make_projection(f"PuC_{side}->DCN_{side}", f"PuC_{side}", f"DCN_{side}", puc_dcn, sign=INH))

        ino_puc = [(0, pc, cfg.w_ino_puc, delay) for pc in range(cfg.n_puc)]
        net.add_projection(make_projection(f"InO_{side}->PuC_{side}", f"InO_{side}", f"PuC_{side}", ino_puc, sign=EXC))

    net.finalize()
    return CerebellarSystem(network=net, config=cfg, plasticity=plastic_states, grc_combos=combos)


@dataclass
class TopologyReport:
    """Convergence counts of a validated network."""

    mof_per_grc: int
    puc_afferents_per_dcn: int
    mof_afferents_per_dcn: int
    pf_synapses_per_side: int
    grc_combinations_distinct: bool


def validate_topology(system: CerebellarSystem) -> TopologyReport:
    """Check counts, per-side isolation and required absences.

    Raises :class:`TopologyError` naming the first offending population or
    neuron; returns a count report when everything holds.
    """
    net = system.network
    cfg = system.config
    projections = {p.name: p for p in net.projections}

    # granule afferents and combination uniqueness
    afferents: dict[int, set[int]] = {g: set() for g in range(cfg.n_grc)}
    for name, shift in (("MoF_act->GrC", 0), ("MoF_set->GrC", cfg.n_mof_act)):
        proj = projections.get(name)
        if proj is None:
            raise TopologyError(f"missing projection {name}")
        for m, g in zip(proj.pre, proj.post):
            afferents[int(g)].add(int(m) + shift)
    for g, combo in afferents.items():
        if len(combo) != cfg.mof_per_grc:
            raise TopologyError(f"GrC {g} has {len(combo)} mossy afferents, expected {cfg.mof_per_grc}")
    combo_set = {tuple(sorted(s)) for s in afferents.values()}
    if len(combo_set) != cfg.n_grc:
        raise TopologyError("granule mossy-fiber combinations are not pairwise distinct")

    for side in SIDES:
        pf = projections.get(f"GrC->PuC_{side}")
        if pf is None or pf.n_synapses != cfg.n_grc * cfg.n_puc:
            raise TopologyError(f"parallel-fiber projection to PuC_{side} is not all-to-all")
        if not pf.plastic.all():
            raise TopologyError(f"parallel-fiber synapses to PuC_{side} must be plastic")

        for d in range(cfg.n_dcn):
            inh = projections.get(f"PuC_{side}->DCN_{side}")
            n_inh = 0 if inh is None else int((inh.post == d).sum())
            if n_inh != cfg.n_puc:
                raise TopologyError(
                    f"DCN_{side} neuron {d} has {n_inh} inhibitory Purkinje afferents, expected {cfg.n_puc}"
                )
            n_exc = sum(
                int((projections[f"{src}->DCN_{side}"].post == d).sum())
                for src in ("MoF_act", "MoF_set")
                if f"{src}->DCN_{side}" in projections
            )
            if n_exc != cfg.n_mof_total:
                raise TopologyError(
                    f"DCN_{side} neuron {d} has {n_exc} mossy afferents, expected {cfg.n_mof_total}"
                )

        ino = projections.get(f"InO_{side}->PuC_{side}")
        if ino is None or ino.n_synapses != cfg.n_puc or set(ino.post.tolist()) != set(range(cfg.n_puc)):
            raise TopologyError(f"InO_{side} must contact exactly the {cfg.n_puc} PuC_{side} cells")

    # absences: no granule recurrence, no output feedback, no olivary loop,
    # no cross-side wiring
    for proj in net.projections:
        if proj.source == "GrC" and proj.target == "GrC":
            raise TopologyError("granule-to-granule projection present")
        if proj.source.startswith("DCN"):
            raise TopologyError(f"deep-nuclei population {proj.source} must not project anywhere")
        if proj.target.startswith("InO"):
            raise TopologyError(f"nothing may project onto teaching line {proj.target}")
        for side, other in (("L", "R"), ("R", "L")):
            if proj.source.endswith(f"_{side}") and proj.target.endswith(f"_{other}"):
                raise TopologyError(f"cross-side projection {proj.name}")

    return TopologyReport(
        mof_per_grc=cfg.mof_per_grc,
        puc_afferents_per_dcn=cfg.n_puc,
        mof_afferents_per_dcn=cfg.n_mof_total,
        pf_synapses_per_side=cfg.n_grc * cfg.n_puc,
        grc_combinations_distinct=True,
    )


# -- versioned text serialization ------------------------------------------

FORMAT_HEADER = "# parafiber network v1"


def dump_network(net: Network) -> str:
    """Serialize populations and synapse tables to the v1 text format."""
    lines = [FORMAT_HEADER, f"dt_ms {net.dt:.9g}", f"mode {net.mode.mode}"]
    for pop in net.populations:
        if pop.kind == "lif":
            p = pop.params
            lines.append(
                f"population {pop.name} lif {pop.size} "
                f"v_rest={p.v_rest:.9g} v_threshold={p.v_threshold:.9g} v_reset={p.v_reset:.9g} "
                f"tau_m={p.tau_m:.9g} r_m={p.r_m:.9g} t_refractory={p.t_refractory:.9g} "
                f"tau_syn_exc={p.tau_syn_exc:.9g} tau_syn_inh={p.tau_syn_inh:.9g} i_offset={p.i_offset:.9g}"
            )
        else:
            lines.append(f"population {pop.name} source {pop.size}")
    for proj in net.projections:
        lines.append(f"projection {proj.name} {proj.source} {proj.target}")
        for k in range(proj.n_synapses):
            lines.append(
                f"synapse {int(proj.pre[k])} {int(proj.post[k])} {proj.weight[k]:.17g} "
                f"{int(proj.delay[k])} {int(proj.sign[k])} {int(proj.plastic[k])}"
            )
    return "\n".join(lines) + "\n"


def load_network(text: str, mode: NumericMode | None = None) -> Network:
    """Rebuild a network from its v1 text dump (weights are a static snapshot;
    plasticity bindings are not part of the format)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise ConfigError("not a parafiber v1 network dump")
    dt_ms = 1.0
    net: Network | None = None
    current: dict | None = None

    def flush(n: Network, d: dict) -> None:
        syn = d["synapses"]
        if syn:
            pre, post, w, delay, sign, plastic = (np.asarray(col) for col in zip(*syn))
        else:
            pre = post = delay = np.zeros(0, dtype=np.int64)
            w = np.zeros(0)
            sign = np.zeros(0, dtype=np.int8)
            plastic = np.zeros(0, dtype=bool)
        n.add_projection(
            Projection(
                name=d["name"],
                source=d["source"],
                target=d["target"],
                pre=pre.astype(np.int64),
                post=post.astype(np.int64),
                weight=w.astype(np.float64),
                delay=delay.astype(np.int64),
                sign=sign.astype(np.int8),
                plastic=plastic.astype(bool),
            )
        )

    pops: list[tuple] = []
    projs: list[dict] = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "dt_ms":
            dt_ms = float(parts[1])
        elif parts[0] == "mode":
            if mode is None:
                mode = NumericMode(mode=parts[1])
        elif parts[0] == "population":
            name, kind, size = parts[1], parts[2], int(parts[3])
            params = None
            if kind == "lif":
                kv = dict(item.split("=") for item in parts[4:])
                params = LifParams(**{k: float(v) for k, v in kv.items()})
            pops.append((name, size, params, kind))
        elif parts[0] == "projection":
            current = {"name": parts[1], "source": parts[2], "target": parts[3], "synapses": []}
            projs.append(current)
        elif parts[0] == "synapse":
            if current is None:
                raise ConfigError("synapse line before any projection")
            current["synapses"].append(
                (int(parts[1]), int(parts[2]), float(parts[3]), int(parts[4]), int(parts[5]), bool(int(parts[6])))
            )
        else:
            raise ConfigError(f"unknown line in network dump: {ln!r}")

    net = Network(dt=dt_ms, mode=mode)
    for name, size, params, kind in pops:
        net.add_population(name, size, params=params, kind=kind)
    for d in projs:
        flush(net, d)
    net.finalize()
    return net


def all_combinations(n_total: int, k: int) -> set[tuple[int, ...]]:
    """Every k-subset of range(n_total); used to cross-check drawn combos."""
    return set(combinations(range(n_total), k))
