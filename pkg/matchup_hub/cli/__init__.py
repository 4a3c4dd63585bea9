"""Модуль cli."""
