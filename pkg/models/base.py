from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, field_serializer


class ArrayModel(BaseModel):
    """Frozen model that may hold numpy arrays and serializes them as lists."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_serializer("*", mode="wrap", when_used="json")
    def _serialize_arrays(self, value: Any, handler):
        if isinstance(value, np.ndarray):
            if np.iscomplexobj(value):
                return {"real": value.real.tolist(), "imag": value.imag.tolist()}
            return value.tolist()
        if isinstance(value, (np.floating, np.integer)):
            return value.item()
        if isinstance(value, complex):
            return {"real": value.real, "imag": value.imag}
        return handler(value)
