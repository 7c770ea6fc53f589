from sdritz.problems import baseproblem
from sdritz.problems.baseproblem import *
from sdritz.problems import benchmarks
from sdritz.problems.benchmarks import *
from sdritz.problems import symbolic
