"""Run orchestration: builds the solvers a RunConfig asks for and writes the artifacts."""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from hermite_dirac.config import RunConfig, config, load_run_config
from hermite_dirac.fields import dirac_point_energy, energy_to_mc2_plus_1, fm_to_au, projectile_velocity
from hermite_dirac.models import (STATIONARY_COLUMNS, CollisionSystem, NuclearModel, ResultTable,
                                  SpinorField2D, SpinorField3D, Trajectory)
from hermite_dirac.solvers import axial_2d, cartesian_3d, monopole_1d
from hermite_dirac.utils.checkpoint import load_checkpoint, save_checkpoint
from hermite_dirac.utils.output import (emit_plot_data, provenance, write_table_csv, write_table_json,
                                        write_time_series)

logger = logging.getLogger(__name__)

MODE_METHODS = {"collide1d": "monopole", "collide2d": "axial", "collide3d": "cartesian"}


@dataclass
class CheckpointPlan:
    """Where and how often a single propagation is checkpointed, and what it resumes from."""
    path: str = ""
    every: int = 0
    resume: str = ""

    def restore(self, descriptor):
        """(coefficients, start step, recorded series) to continue from, or a fresh start."""
        if not self.resume:
            return None, 0, None
        saved = load_checkpoint(self.resume, descriptor)
        return saved.coefficients, int(saved.step), saved.series

    def hook(self, descriptor):
        if not (self.every and self.path):
            return None

        def on_step(step, t, C, series):
            if step % self.every == 0:
                save_checkpoint(self.path, descriptor, t, step, C, series)
        return on_step


NO_CHECKPOINTS = CheckpointPlan()


# === Builders ===

def build_system(cfg, model=None, z_a=None, z_b=None):
    """CollisionSystem of the [system] section; the sphere model applies to both nuclei."""
    s = cfg["system"]
    nucleus = NuclearModel(model or s["model"], s["r_rms_fm"])
    return CollisionSystem(z_a=s["z_a"] if z_a is None else z_a, z_b=s["z_b"] if z_b is None else z_b,
                           model_a=nucleus, model_b=nucleus, energy_per_nucleon=s["energy_per_nucleon"])


def build_radial_channel(cfg, Z):
    m = cfg["monopole"]
    grid = monopole_1d.make_radial_grid(Z, m["nodes"], m["eta"], m["xi"], m["r_min"])
    return monopole_1d.RadialChannel(grid, m["kappa"], m["order"])


def target_basis(cfg, channel, system):
    V, breakpoints = monopole_1d.target_potential(system)
    return monopole_1d.stationary_states(channel, V, breakpoints, cfg["monopole"]["screening"])


# === Modes ===

def run_stationary(cfg):
    """Lowest target state for every Z of [stationary].z_values (default: system.z_a)."""
    table = ResultTable(mode="stationary", columns=STATIONARY_COLUMNS)
    model = cfg["system"]["model"]
    kappa = cfg["monopole"]["kappa"]
    for Z in cfg["stationary"]["z_values"] or [cfg["system"]["z_a"]]:
        system = build_system(cfg, z_a=Z, z_b=0)
        channel = build_radial_channel(cfg, Z)
        basis = target_basis(cfg, channel, system)
        exact = dirac_point_energy(Z) if model == "point" and kappa == -1 else None
        table.add_row(Z=Z, model=model, E_1s_au=basis.bound_energy, E_1s_exact_au=exact,
                      E_1s_over_mc2_plus_1=energy_to_mc2_plus_1(basis.bound_energy))
        logger.info(f"Z = {Z} ({model}): E = {basis.bound_energy:.7f} a.u.")
    return table


def collide_monopole(cfg, b_fm, model, plan=NO_CHECKPOINTS):
    m = cfg["monopole"]
    system = build_system(cfg, model)
    channel = build_radial_channel(cfg, system.z_a)
    basis = target_basis(cfg, channel, system)
    traj = Trajectory.from_start_distance(projectile_velocity(system.energy_per_nucleon), fm_to_au(b_fm),
                                          channel.grid.b)
    descriptor = {"method": "monopole", "basis": channel.grid.descriptor(), "kappa": channel.kappa,
                  "steps": m["steps"], "b_fm": b_fm, "model": model, "determinant": m["determinant"],
                  "determinant_window": m["determinant_window"]}
    initial, start_step, history = plan.restore(descriptor)
    result = monopole_1d.collide(channel, system, traj, m["steps"], basis=basis,
                                 with_determinant=m["determinant"], initial=initial,
                                 determinant_window=m["determinant_window"],
                                 norm_tolerance=m["norm_tolerance"], log_every=cfg["output"]["log_every"],
                                 on_step=plan.hook(descriptor), start_step=start_step, history=history)
    obs = result.observables
    row = {"b_fm": b_fm, "model": model, "E_min_over_mc2_plus_1": obs.get("E_min_over_mc2_plus_1"),
           "P_1s": obs["P_1s"], "P_minus": obs["P_minus"], "P_bar_1s": obs.get("P_bar_1s")}
    return row, result


def collide_axial(cfg, b_fm, model, plan=NO_CHECKPOINTS):
    a = cfg["axial"]
    system = build_system(cfg, model)
    grid = axial_2d.make_cyl_grid(a["rho_max_fm"], a["z_length_fm"], a["rho_nodes"], a["z_nodes"], a["m"])
    ops = axial_2d.AxialOperators(grid, a["order"])
    z_target = axial_2d.place_target(grid, a["target_shift_fm"])
    traj = Trajectory.from_start_distance(projectile_velocity(system.energy_per_nucleon), fm_to_au(b_fm),
                                          0.5 * fm_to_au(a["z_length_fm"]))
    reference, energy = axial_2d.initial_state_2d(ops, system, z_target)
    logger.info(f"Axial initial state energy: {energy:.4f} a.u.")
    descriptor = {"method": "axial", "basis": grid.descriptor(), "steps": a["steps"],
                  "b_fm": b_fm, "model": model}
    coefficients, start_step, history = plan.restore(descriptor)
    initial = reference if coefficients is None else SpinorField2D(coefficients, grid.shape)
    result, _ = axial_2d.collide_2d(ops, system, traj, a["steps"], z_target, initial=initial,
                                    reference=reference, norm_tolerance=a["norm_tolerance"],
                                    log_every=cfg["output"]["log_every"], on_step=plan.hook(descriptor),
                                    start_step=start_step, history=history)
    row = {"b_fm": b_fm, "model": model, "P_1s": result.observables["P_1s"],
           "P_ct": result.observables["P_ct"]}
    return row, result


def collide_cartesian(cfg, b_fm, model, plan=NO_CHECKPOINTS):
    c = cfg["cartesian"]
    system = build_system(cfg, model)
    grid = cartesian_3d.make_cart_grid(tuple(c["box_fm"]), tuple(c["nodes"]))
    ops = cartesian_3d.CartesianOperators(grid, c["order"])
    target = cartesian_3d.place_target(grid, c["target_shift_fm"])
    traj = Trajectory.from_start_distance(projectile_velocity(system.energy_per_nucleon), fm_to_au(b_fm),
                                          0.5 * fm_to_au(c["box_fm"][2]))
    channel = build_radial_channel(cfg, system.z_a)
    basis = target_basis(cfg, channel, system)
    reference = cartesian_3d.initial_state_3d(ops, channel, basis.bound_vector, target)
    descriptor = {"method": "cartesian", "basis": grid.descriptor(), "steps": c["steps"],
                  "b_fm": b_fm, "model": model, "azimuth": c["azimuth"]}
    coefficients, start_step, history = plan.restore(descriptor)
    initial = reference if coefficients is None else SpinorField3D(coefficients, grid.shape)
    result, _ = cartesian_3d.collide_3d(ops, system, traj, c["steps"], target, initial,
                                        azimuth=c["azimuth"], reference=reference, tol=c["tol"],
                                        max_iter=c["max_iter"], norm_tolerance=c["norm_tolerance"],
                                        log_every=cfg["output"]["log_every"], on_step=plan.hook(descriptor),
                                        start_step=start_step, history=history)
    row = {"b_fm": b_fm, "model": model, "P_1s": result.observables["P_1s"],
           "P_ct": result.observables["P_ct"]}
    return row, result


COLLIDERS = {
    "monopole": collide_monopole,
    "axial": collide_axial,
    "cartesian": collide_cartesian,
}


def _sweep_point(sections, tier, method, b_fm, model):
    """One sweep job; top level so worker processes can unpickle it."""
    cfg = RunConfig(mode="sweep", tier=tier, sections=sections)
    row, result = COLLIDERS[method](cfg, b_fm, model)
    return row, result


# === Runner ===

def _tag(b_fm, model):
    return f"b{b_fm:g}_{model}"


class Runner:
    """Executes one validated RunConfig and writes its artifacts into output.dir."""

    def __init__(self, run_config):
        self.config = run_config
        self.provenance = provenance(run_config.as_dict(), run_config.tier)

    @property
    def out(self):
        return self.config.output_dir

    def _path(self, name):
        return os.path.join(self.out, name)

    def execute(self):
        """Run the configured mode.

        Returns:
            ResultTable: the rows written to <mode>.csv and <mode>.json
        """
        mode = self.config.mode
        logger.info(f"Starting {mode} run ({self.config.tier} tier, config hash {self.provenance['config_hash']})")
        os.makedirs(self.out, exist_ok=True)

        if mode == "stationary":
            table = run_stationary(self.config)
        elif mode == "sweep":
            table = self._sweep()
        else:
            table = self._single(MODE_METHODS[mode])

        table.provenance = self.provenance
        write_table_csv(table, self._path(f"{mode}.csv"))
        write_table_json(table, self._path(f"{mode}.json"))
        if "P_ct" in table.columns and table.has_values("P_ct"):
            emit_plot_data(table, self._path(f"{mode}_pct.dat"))
        return table

    def _single(self, method):
        cfg = self.config
        b_fm, model = cfg["system"]["b_fm"], cfg["system"]["model"]
        out = cfg["output"]
        plan = CheckpointPlan(path=self._path(f"{cfg.mode}_{_tag(b_fm, model)}.ckpt"),
                              every=out["checkpoint_every"], resume=out["resume"])
        row, result = COLLIDERS[method](cfg, b_fm, model, plan)
        self._write_series(result, b_fm, model)
        table = ResultTable(mode=cfg.mode)
        table.add_row(**row)
        return table

    def _sweep(self):
        cfg = self.config
        method = cfg["sweep"]["method"]
        jobs = [(b, model) for model in cfg["sweep"]["models"] for b in cfg["sweep"]["b_fm"]]
        logger.info(f"Sweep over {len(jobs)} point(s) with the {method} solver, {cfg.threads} worker(s)")

        if cfg.threads > 1:
            with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
                futures = [pool.submit(_sweep_point, cfg.sections, cfg.tier, method, b, model) for b, model in jobs]
                outcomes = [f.result() for f in futures]
        else:
            outcomes = [_sweep_point(cfg.sections, cfg.tier, method, b, model) for b, model in jobs]

        table = ResultTable(mode="sweep")
        for (b, model), (row, result) in zip(jobs, outcomes):
            table.add_row(**row)
            self._write_series(result, b, model)
        return table

    def _write_series(self, result, b_fm, model):
        write_time_series(result, self._path(f"timeseries_{self.config.mode}_{_tag(b_fm, model)}.csv"),
                          self.provenance)


def create_runner(tier=None, config_path=None, overrides=None):
    """Load a run configuration and return a Runner for it, with logging set up for the tier."""
    tier_name = tier or os.getenv('HERMITE_DIRAC_TIER', 'default')
    config.get(tier_name, config['default']).init_logging()

    run_config = load_run_config(config_path, tier, overrides)
    config[run_config.tier].init_logging()
    logger.info(f"Runner created with {run_config.tier} configuration")
    return Runner(run_config)


def run(config_path=None, tier=None, overrides=None):
    """Execute a run end to end.

    Returns:
        int: exit status, 0 on success; failures raise HermiteDiracError subclasses
            whose status the command line reports
    """
    create_runner(tier, config_path, overrides).execute()
    return 0
