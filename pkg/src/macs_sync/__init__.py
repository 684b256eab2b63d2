"""Controller-synchronization simulator and learned broadcast scheduler."""

__version__ = "0.1.0"
