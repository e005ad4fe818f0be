"""Camera placement: layout files, tuned presets and SVG renders."""
from __future__ import annotations

from ..geometry import (Beam, CameraPose, CameraSpec, CoverageObjective, FarmLayout, GeometryError,
                        coverage_fraction, fov_triangle)
from .cmaes import cmaes_run
from .config import ConfigError, OptimizerConfig, SolutionReport
from .map_elites import Archive, map_elites_run


def layout_from_dict(d: dict) -> tuple[FarmLayout, CameraSpec]:
    """Layout file shape: length_m, width_m, pixel_size_m, beams [{axis, offset_m}], camera {fov_deg, depth_m, count}."""
    try:
        beams = tuple(Beam(b["axis"], float(b["offset_m"])) for b in d["beams"])
        layout = FarmLayout(float(d["length_m"]), float(d["width_m"]), float(d.get("pixel_size_m", 0.1)), beams)
        cam = d["camera"]
        spec = CameraSpec(float(cam["fov_deg"]), float(cam["depth_m"]), int(cam["count"]))
    except KeyError as e:
        raise GeometryError(f"layout is missing key {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        if isinstance(e, GeometryError):
            raise
        raise GeometryError(f"malformed layout: {e}") from None
    return layout, spec


def layout_to_dict(layout: FarmLayout, spec: CameraSpec) -> dict:
    return {
        "length_m": layout.length, "width_m": layout.width, "pixel_size_m": layout.pixel_size,
        "beams": [{"axis": b.axis, "offset_m": b.offset} for b in layout.beams],
        "camera": {"fov_deg": spec.fov_deg, "depth_m": spec.depth, "count": spec.count},
    }


def orientation_genes(spec: CameraSpec) -> tuple[int, ...]:
    return tuple(range(2, 3 * spec.count, 3))


def placement_config(spec: CameraSpec, algo: str, *, evals: int, seed: int,
                     overrides: dict | None = None) -> OptimizerConfig:
    """Optimizer settings tuned for the placement problem.

    CMA-ES uses a population of 400: the default population stalls on local
    optima of the piecewise-constant coverage landscape. MAP-Elites uses
    Iso+LineDD variation, which fills elites far closer to full coverage than
    plain Gaussian mutation within the same budget. Orientation genes wrap.
    Keys in ``overrides`` (the config file's optimizer block) win.
    """
    base: dict = {"max_evaluations": evals, "seed": seed, "periodic_genes": orientation_genes(spec)}
    if algo == "cmaes":
        base["cmaes"] = {"population": 400}
    elif algo == "map-elites":
        base["map_elites"] = {"variation": "iso_line_dd", "iso_sigma": 0.01, "line_sigma": 0.2}
    else:
        raise ConfigError(f"unknown algorithm {algo!r}; expected cmaes or map-elites")
    for k, v in (overrides or {}).items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            base[k] = {**base[k], **v}
        else:
            base[k] = v
    return OptimizerConfig.from_dict(base, dim=3 * spec.count)


def run_placement(layout: FarmLayout, spec: CameraSpec, algo: str, config: OptimizerConfig
                  ) -> tuple[SolutionReport, Archive | None]:
    objective = CoverageObjective(layout, spec)
    if algo == "cmaes":
        return cmaes_run(objective, config, target_fitness=1.0), None
    arch = map_elites_run(objective, objective.descriptor, config)
    _, best = arch.best()
    report = SolutionReport("map-elites", best.genotype, best.fitness, config.max_evaluations, config.seed)
    return report, arch


def poses_record(poses: list[CameraPose]) -> list[dict]:
    return [{"x_m": round(p.x, 6), "y_m": round(p.y, 6), "orientation_deg": round(p.orientation_deg, 6),
             "beam": p.beam_index} for p in poses]


def render_svg(layout: FarmLayout, spec: CameraSpec, poses: list[CameraPose], *, scale: float = 40.0,
               title: str = "") -> str:
    """Plan view: farm outline, beams, FOV triangles clipped to the farm and camera markers."""
    pad = 10.0
    w, h = layout.length * scale + 2 * pad, layout.width * scale + 2 * pad

    def pt(x, y):
        # SVG y grows downward
        return f"{pad + x * scale:.2f},{pad + (layout.width - y) * scale:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
           f'viewBox="0 0 {w:.2f} {h:.2f}">']
    if title:
        out.append(f"<title>{title}</title>")
    out.append('<defs><clipPath id="farm"><rect x="{:.2f}" y="{:.2f}" width="{:.2f}" height="{:.2f}"/>'
               '</clipPath></defs>'.format(pad, pad, layout.length * scale, layout.width * scale))
    out.append(f'<rect x="{pad:.2f}" y="{pad:.2f}" width="{layout.length * scale:.2f}" '
               f'height="{layout.width * scale:.2f}" fill="#f4f1e8" stroke="#333"/>')
    for b in layout.beams:
        if b.axis == "horizontal":
            a, c = pt(0, b.offset), pt(layout.length, b.offset)
        else:
            a, c = pt(b.offset, 0), pt(b.offset, layout.width)
        (x1, y1), (x2, y2) = a.split(","), c.split(",")
        out.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="#8a6d3b" stroke-dasharray="4 3"/>')
    out.append('<g clip-path="url(#farm)">')
    for p in poses:
        tri = fov_triangle(p, spec)
        out.append('<polygon points="{}" fill="#3a7bd5" fill-opacity="0.25" stroke="#3a7bd5"/>'.format(
            " ".join(pt(x, y) for x, y in tri)))
    out.append("</g>")
    for p in poses:
        x, y = pt(p.x, p.y).split(",")
        out.append(f'<circle cx="{x}" cy="{y}" r="4" fill="#c0392b"/>')
    cov = coverage_fraction(poses, spec, layout) if poses else 0.0
    out.append(f'<text x="{pad:.0f}" y="{h - 1:.0f}" font-size="9" font-family="sans-serif">'
               f'coverage {cov:.4f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

