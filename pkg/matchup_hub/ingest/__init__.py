"""Загрузка таблиц сезона и сборка связанного набора данных."""
