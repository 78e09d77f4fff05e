"""Domain layer — immutable value objects and ports."""
