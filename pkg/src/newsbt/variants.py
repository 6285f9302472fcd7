"""Closed set of document-vector variants."""

from enum import Enum


class Variant(str, Enum):
    LAST_LAYER = "last_layer"
    ALL_LAYER_MEAN = "all_layer_mean"
    FIRST_LAYER = "first_layer"

    @property
    def short(self):
        return _SHORT[self]

    @classmethod
    def parse(cls, value):
        """Accept either the long id or the sidecar short code."""
        if isinstance(value, cls):
            return value
        if value in _FROM_SHORT:
            return _FROM_SHORT[value]
        return cls(value)


_SHORT = {
    Variant.LAST_LAYER: "last",
    Variant.ALL_LAYER_MEAN: "mean",
    Variant.FIRST_LAYER: "first",
}
_FROM_SHORT = {v: k for k, v in _SHORT.items()}

#: Tie-break order for variant selection and canonical iteration order.
VARIANT_ORDER = (Variant.LAST_LAYER, Variant.ALL_LAYER_MEAN, Variant.FIRST_LAYER)

#: Variant used before enough out-of-sample history exists to choose one.
DEFAULT_VARIANT = Variant.ALL_LAYER_MEAN
