# Tests for stratal
