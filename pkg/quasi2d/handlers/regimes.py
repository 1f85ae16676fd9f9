import logging

import numpy as np

from quasi2d.artifacts import write_rows_csv
from quasi2d.checks import holds
from quasi2d.handlers.base import CommandOutcome, RunContext
from quasi2d.services.regimes import (
    COVERED,
    EXCLUDED_ADMISSIBILITY,
    FREE_REGIME,
    RegimeParams,
    RegimeService,
    SequenceSpec,
    default_params,
    label_counts,
)

logger = logging.getLogger(__name__)

RASTER_COLUMNS = ("N", "eps", "label", "adm_margin", "conf_margin")


def regime_params(p) -> RegimeParams:
    if p.Theta is None:
        return default_params(p.beta)
    return RegimeParams(p.beta, p.Theta, p.Gamma)


def regimes_command(ctx: RunContext) -> CommandOutcome:
    p = ctx.params
    params = regime_params(p)
    service = RegimeService(p.slack)
    N_grid = np.geomspace(p.N_min, p.N_max, p.N_points)
    eps_grid = np.geomspace(p.eps_min, p.eps_max, p.eps_points)
    raster = service.region_raster(params, N_grid, eps_grid, chen_holmer=p.chen_holmer)
    counts = label_counts(raster)

    rows = []
    if params.beta == 1.0:
        rows.append(holds("no_free_regime_cells", counts[FREE_REGIME] == 0, counts[FREE_REGIME]))
    else:
        present = sum(counts[k] > 0 for k in (COVERED, EXCLUDED_ADMISSIBILITY, FREE_REGIME))
        logger.info(f"beta={params.beta}: {present} of the three regions present on the grid")

    columns = RASTER_COLUMNS + (("ch_margin",) if p.chen_holmer else ())
    write_rows_csv(ctx.path("raster.csv"), raster, columns)
    summary = {"params": params.describe(), "counts": counts}

    if p.sequence:
        seq = service.check_sequence(SequenceSpec(pairs=p.sequence), params, len(p.sequence))
        summary["sequence"] = seq
        rows.append(holds("sequence_preconditions", not seq["precondition_risk"]))
    return CommandOutcome(rows, summary)
