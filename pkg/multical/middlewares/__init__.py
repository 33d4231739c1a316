"""Cross-cutting wrappers around command handlers."""
