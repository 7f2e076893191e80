"""
The main package contains the function :func:`tsgraphs.run`, which is the main entry
point of the application. The pipeline components live in the submodules.
"""

from .script import run

__version__ = "0.1"
"""
The version number
"""
