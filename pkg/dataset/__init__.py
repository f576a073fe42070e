# dataset/__init__.py
"""
Samples, annotations, image I/O, augmentation and the synthetic road-scene
renderer
"""
