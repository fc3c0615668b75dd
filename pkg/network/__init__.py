"""U-net, BRU-net and FU-net architectures."""

from .spec import NetworkSpec
from .unet import Network, count_parameters, parameter_layout
from .serializer import load, save

__all__ = ['NetworkSpec', 'Network', 'count_parameters', 'parameter_layout', 'load', 'save']
