"""Landing guidance simulators."""
