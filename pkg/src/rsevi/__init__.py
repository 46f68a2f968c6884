"""Event-guided rolling-shutter correction and frame interpolation."""
