"""
polytomo: confidence polytopes for quantum state and process tomography
"""
from polytomo.config import settings

__version__ = settings.app_version
