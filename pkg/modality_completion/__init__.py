# -*- coding: utf-8 -*-

"""Top-level package for Modality Completion."""

__author__ = """Modality Completion developers"""
__email__ = ''
__version__ = '0.1.0'
