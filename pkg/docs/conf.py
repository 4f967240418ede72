#!/usr/bin/env python
#
# Sphinx configuration for the modality_completion documentation.

import os
import sys
sys.path.insert(0, os.path.abspath('..'))

import modality_completion

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.viewcode', 'sphinx.ext.mathjax']
autodoc_member_order = 'bysource'

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'Modality Completion'
copyright = "2026, Modality Completion developers"
author = "Modality Completion developers"

# The short X.Y version and the full version, including alpha/beta/rc tags.
version = modality_completion.__version__
release = modality_completion.__version__

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'

html_theme = 'sphinx_rtd_theme'
html_static_path = ['_static']
htmlhelp_basename = 'modality_completiondoc'

latex_documents = [
    (master_doc, 'modality_completion.tex', 'Modality Completion Documentation',
     author, 'manual'),
]

man_pages = [
    (master_doc, 'modality_completion', 'Modality Completion Documentation', [author], 1),
    (master_doc, 'mcdbn', 'Command line for modality completion', [author], 1),
]

texinfo_documents = [
    (master_doc, 'modality_completion', 'Modality Completion Documentation', author,
     'modality_completion', 'Multimodal completion of missing time-series data with deep belief networks.',
     'Miscellaneous'),
]
