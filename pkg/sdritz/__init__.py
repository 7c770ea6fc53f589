from sdritz.version import __version__, __release__
from sdritz import sampling
from sdritz.sampling import *
from sdritz.utilities import utilities
from sdritz.utilities import *
from sdritz.problems import *
from sdritz import gradnet
from sdritz.gradnet import *
from sdritz.stats import evaluation
from sdritz.stats.evaluation import *
from sdritz.stats import training
from sdritz.stats.training import *

__all__ = []

__all__.extend(sampling.__all__)
__all__.extend(utilities.__all__)
__all__.extend(baseproblem.__all__)
__all__.extend(benchmarks.__all__)
__all__.extend(gradnet.__all__)
__all__.extend(evaluation.__all__)
__all__.extend(training.__all__)
