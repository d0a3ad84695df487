import logging
import numbers

from hermite_dirac.utils.errors import ConfigError

logger = logging.getLogger(__name__)

MODELS = ("point", "sphere")
SWEEP_METHODS = ("monopole", "axial", "cartesian")
SCREENING = ("raise", "warn", "off")


def _is_number(value):
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _is_int(value):
    return isinstance(value, numbers.Integral) and not isinstance(value, bool)


def _positive(errors, section, values, *keys):
    for key in keys:
        value = values.get(key)
        if not _is_number(value) or not value > 0:
            errors.append(f"{section}.{key}: must be a positive number, got {value!r}")


def _count(errors, section, values, key, minimum, even=False):
    value = values.get(key)
    if not _is_int(value) or value < minimum:
        errors.append(f"{section}.{key}: must be an integer >= {minimum}, got {value!r}")
    elif even and value % 2:
        errors.append(f"{section}.{key}: must be even so that closest approach is a time point, got {value}")


def _validate_system(errors, values):
    for key in ("z_a", "z_b"):
        if not _is_int(values.get(key)) or values[key] < 0:
            errors.append(f"system.{key}: must be a non-negative integer, got {values.get(key)!r}")
    if values.get("model") not in MODELS:
        errors.append(f"system.model: must be one of {', '.join(MODELS)}, got {values.get('model')!r}")
    _positive(errors, "system", values, "r_rms_fm", "energy_per_nucleon")
    b = values.get("b_fm")
    if not _is_number(b) or b < 0:
        errors.append(f"system.b_fm: must be a non-negative number, got {b!r}")


def _validate_monopole(errors, values):
    kappa = values.get("kappa")
    if not _is_int(kappa) or kappa == 0:
        errors.append(f"monopole.kappa: must be a nonzero integer, got {kappa!r}")
    _count(errors, "monopole", values, "nodes", 2)
    _count(errors, "monopole", values, "steps", 2, even=True)
    _count(errors, "monopole", values, "order", 2)
    _positive(errors, "monopole", values, "r_min", "norm_tolerance")
    eta, xi = values.get("eta"), values.get("xi")
    if not (_is_number(eta) and _is_number(xi)) or eta < 0 or xi < 0 or (eta == 0 and xi == 0):
        errors.append(f"monopole.eta: eta and xi must be >= 0 and not both zero, got {eta!r}, {xi!r}")
    if values.get("screening") not in SCREENING:
        errors.append(f"monopole.screening: must be one of {', '.join(SCREENING)}, got {values.get('screening')!r}")
    if not isinstance(values.get("determinant"), bool):
        errors.append(f"monopole.determinant: must be true or false, got {values.get('determinant')!r}")
    window = values.get("determinant_window")
    if not _is_number(window) or window < 0:
        errors.append(f"monopole.determinant_window: must be a non-negative number of mc^2, got {window!r}")


def _validate_axial(errors, values):
    m = values.get("m")
    if not _is_number(m) or abs(m) % 1.0 != 0.5:
        errors.append(f"axial.m: must be half-integer, got {m!r}")
    _positive(errors, "axial", values, "rho_max_fm", "z_length_fm", "norm_tolerance")
    if not _is_number(values.get("target_shift_fm")):
        errors.append(f"axial.target_shift_fm: must be a number, got {values.get('target_shift_fm')!r}")
    elif _is_number(values.get("z_length_fm")) and abs(values["target_shift_fm"]) >= 0.5 * values["z_length_fm"]:
        errors.append("axial.target_shift_fm: target must lie inside the box")
    _count(errors, "axial", values, "rho_nodes", 2)
    _count(errors, "axial", values, "z_nodes", 2)
    _count(errors, "axial", values, "steps", 2, even=True)
    _count(errors, "axial", values, "order", 2)


def _validate_cartesian(errors, values):
    box, nodes = values.get("box_fm"), values.get("nodes")
    if not isinstance(box, list) or len(box) != 3 or not all(_is_number(x) and x > 0 for x in box):
        errors.append(f"cartesian.box_fm: must be three positive lengths, got {box!r}")
    if not isinstance(nodes, list) or len(nodes) != 3 or not all(_is_int(n) and n >= 2 for n in nodes):
        errors.append(f"cartesian.nodes: must be three integers >= 2, got {nodes!r}")
    if not _is_number(values.get("target_shift_fm")):
        errors.append(f"cartesian.target_shift_fm: must be a number, got {values.get('target_shift_fm')!r}")
    if not _is_number(values.get("azimuth")):
        errors.append(f"cartesian.azimuth: must be a number, got {values.get('azimuth')!r}")
    _positive(errors, "cartesian", values, "tol", "norm_tolerance")
    _count(errors, "cartesian", values, "steps", 2, even=True)
    _count(errors, "cartesian", values, "order", 2)
    _count(errors, "cartesian", values, "max_iter", 1)


def _validate_sweep(errors, values):
    if values.get("method") not in SWEEP_METHODS:
        errors.append(f"sweep.method: must be one of {', '.join(SWEEP_METHODS)}, got {values.get('method')!r}")
    b_values = values.get("b_fm")
    if not isinstance(b_values, list) or not b_values:
        errors.append(f"sweep.b_fm: must be a non-empty list, got {b_values!r}")
    else:
        for i, b in enumerate(b_values):
            if not _is_number(b) or b < 0:
                errors.append(f"sweep.b_fm[{i}]: must be a non-negative number, got {b!r}")
    models = values.get("models")
    if not isinstance(models, list) or not models or any(m not in MODELS for m in models):
        errors.append(f"sweep.models: must be a non-empty list drawn from {', '.join(MODELS)}, got {models!r}")


def _validate_output(errors, values):
    if not isinstance(values.get("dir"), str) or not values["dir"]:
        errors.append(f"output.dir: must be a non-empty path, got {values.get('dir')!r}")
    _count(errors, "output", values, "threads", 1)
    _count(errors, "output", values, "log_every", 0)
    _count(errors, "output", values, "checkpoint_every", 0)
    if not isinstance(values.get("resume"), str):
        errors.append(f"output.resume: must be a path or empty, got {values.get('resume')!r}")


def validate_run_config(sections, modes):
    """Collect every problem of a merged configuration.

    Returns:
        list[str]: messages of the form "<section>.<field>: problem", empty when valid
    """
    errors = []
    mode = sections["run"].get("mode")
    if mode not in modes:
        errors.append(f"run.mode: must be one of {', '.join(modes)}, got {mode!r}")
    _validate_system(errors, sections["system"])
    z_values = sections["stationary"].get("z_values")
    if not isinstance(z_values, list) or not all(_is_int(z) and z > 0 for z in z_values):
        errors.append(f"stationary.z_values: must be a list of positive integers, got {z_values!r}")
    _validate_monopole(errors, sections["monopole"])
    _validate_axial(errors, sections["axial"])
    _validate_cartesian(errors, sections["cartesian"])
    _validate_sweep(errors, sections["sweep"])
    _validate_output(errors, sections["output"])
    if sections["system"].get("z_a") == 0:
        errors.append("system.z_a: the target needs a nonzero charge to bind the electron")
    return errors


def require_valid(sections, modes):
    """Raise ConfigError with every problem found."""
    errors = validate_run_config(sections, modes)
    if errors:
        logger.error(f"Configuration error: {'; '.join(errors)}")
        raise ConfigError(errors)
