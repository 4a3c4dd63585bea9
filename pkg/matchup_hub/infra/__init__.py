"""Инфраструктурные модули."""
