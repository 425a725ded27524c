"""Per-module parameter vectors and the preprocessing flag derivation.

Three module slots exist: preprocessing, feature extraction and
classification. Each holds one parameter vector of plain scalars. The
slot bindings are created once and kept for the object's lifetime;
set_params replaces a vector's contents, never the binding.
"""

from __future__ import annotations

from .errors import PipelineError

__all__ = [
    "PREPROCESSING",
    "FEATURE_EXTRACTION",
    "CLASSIFICATION",
    "NullParameters",
    "UnknownModuleType",
    "ModuleParams",
    "derive_preprocessing_flags",
]

# Slot keys. The associative layout is the contract; the integer values
# are this implementation's choice.
PREPROCESSING = 0
FEATURE_EXTRACTION = 1
CLASSIFICATION = 2

_MODULE_TYPES = (PREPROCESSING, FEATURE_EXTRACTION, CLASSIFICATION)

Scalar = bool | int | float | str


class NullParameters(PipelineError):
    def __init__(self) -> None:
        super().__init__("Parameters vector cannot be null.")


class UnknownModuleType(PipelineError):
    def __init__(self, module_type: int) -> None:
        super().__init__(f"Unknown module type: {module_type}.")
        self.module_type = module_type


class ModuleParams:
    """Mutable holder of the three parameter vectors."""

    __slots__ = ("_vectors",)

    def __init__(self) -> None:
        self._vectors: dict[int, list[Scalar]] = {key: [] for key in _MODULE_TYPES}

    def set_params(self, params: list[Scalar] | None, module_type: int) -> None:
        """Replace the vector's contents for one module slot.

        Raises:
            NullParameters: params is None.
            UnknownModuleType: module_type is not one of the three slots.
        """
        if params is None:
            raise NullParameters()
        vector = self._vectors.get(module_type)
        if vector is None:
            raise UnknownModuleType(module_type)
        vector.clear()
        vector.extend(params)

    def params_for(self, module_type: int) -> list[Scalar]:
        vector = self._vectors.get(module_type)
        if vector is None:
            raise UnknownModuleType(module_type)
        return vector

    @property
    def preprocessing_params(self) -> list[Scalar]:
        return self._vectors[PREPROCESSING]

    @property
    def feature_extraction_params(self) -> list[Scalar]:
        return self._vectors[FEATURE_EXTRACTION]

    @property
    def classification_params(self) -> list[Scalar]:
        return self._vectors[CLASSIFICATION]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModuleParams):
            return NotImplemented
        return self._vectors == other._vectors

    def __repr__(self) -> str:
        return f"ModuleParams({self._vectors!r})"


def derive_preprocessing_flags(
    params: list[Scalar] | None,
) -> tuple[int, int]:
    """Read the (noise_removed, silence_removed) flags from a vector.

    Total over every input: an absent or empty vector means both off; a
    one-element vector can only set the noise flag; from two elements on,
    element 0 sets noise and element 1 sets silence. Elements that are
    not booleans leave their flag at 0.
    """
    noise = 0
    silence = 0
    if params is None or len(params) == 0:
        return (noise, silence)
    if isinstance(params[0], bool):
        noise = 1 if params[0] else 0
    if len(params) >= 2 and isinstance(params[1], bool):
        silence = 1 if params[1] else 0
    return (noise, silence)
