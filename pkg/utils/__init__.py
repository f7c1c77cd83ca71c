# Utility modules: config, logging, file formats
