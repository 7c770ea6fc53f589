from sdritz.utilities.utilities import *
