"""Spatial confounding models for areal count data."""

from ._spconf import (
    AreaGraph,
    Dataset,
    Error,
    IoError,
    NumericError,
    ParseError,
    ValidationError,
    coverage_and_length,
    fit,
    ingest,
    lattice_graph,
    load_graph,
    make_dataset,
    marb_mrrmse,
    scaled_car_precision,
    se_sim_and_est,
    simulate,
    type_s_rate,
    version,
    waic,
)

__version__ = version()
