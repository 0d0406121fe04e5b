"""Wave packet systems on the plane: covering, packets, Gram decay and frame operators."""

from .index_space import FrequencyIndex, PacketIndex, ParamError, SystemParams, enumerate_indices

__all__ = ["FrequencyIndex", "PacketIndex", "ParamError", "SystemParams", "enumerate_indices"]
__version__ = "0.1.0"
