"""kdvduo: boundary control toolkit for the Gear-Grimshaw coupled KdV system."""
