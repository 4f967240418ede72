# -*- coding: utf-8 -*-

"""Unit test package for modality_completion."""
