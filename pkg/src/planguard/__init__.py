"""Safety-filtered multi-agent plan execution for mobile manipulators."""

__version__ = "0.1.0"
