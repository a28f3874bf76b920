# Test package for irslink
