"""
Decoupling field app.
"""

default_app_config = 'dfield.apps.DecouplingFieldConfig'
