"""Lookahead-aware backtesting of news-embedding return forecasts.

Subpackages and modules follow the pipeline order: :mod:`~newsbt.panel_store`
(inputs), :mod:`~newsbt.embed_agg`, :mod:`~newsbt.cross_ridge`,
:mod:`~newsbt.portfolio`, :mod:`~newsbt.sharpe`, and the orchestration in
:mod:`~newsbt.pipeline`. :mod:`~newsbt.eval_harness` scores probe and
HellaSwag files; :mod:`~newsbt.synth` builds synthetic panels.
"""

from .errors import NewsBTError
from .variants import DEFAULT_VARIANT, VARIANT_ORDER, Variant

__version__ = "0.1.0"

__all__ = ["DEFAULT_VARIANT", "NewsBTError", "VARIANT_ORDER", "Variant", "__version__"]
