"""
File readers and writers for rasters, masks and manifests.
"""
