"""
Тесты для проекта FireResiScience.
"""
