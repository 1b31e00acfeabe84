__version__ = "0.1.0"

from .Analyzer.analyzer import WcetAnalyzer
from .Utilities.utils import get_problem
