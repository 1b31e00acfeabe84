from .analyzer import WcetAnalyzer
