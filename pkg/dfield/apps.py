"""
AppConfig for the decoupling field app.
"""

from django.apps import AppConfig


class DecouplingFieldConfig(AppConfig):
    """
    AppConfig for the decoupling field app.
    """
    name = 'dfield'
    verbose_name = 'Decoupling Fields'
