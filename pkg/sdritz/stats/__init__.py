from sdritz.stats import evaluation
from sdritz.stats import training
