import logging
import os


class Logger:
    def __init__(self, log_file="Logs/qgnlo.log", name="qgnlo", console_level=logging.INFO):
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)

        # File handler to write logs to a file; a new path replaces the old one
        if log_file:
            self._use_log_file(log_file)

        # Console handler to print logs to the console, shared by every Logger with this name
        if not any(type(h) is logging.StreamHandler for h in self.logger.handlers):
            console_handler = logging.StreamHandler()
            console_handler.setLevel(console_level)
            console_formatter = logging.Formatter('%(levelname)s - %(message)s')
            console_handler.setFormatter(console_formatter)
            self.logger.addHandler(console_handler)

    def _use_log_file(self, log_file):
        path = os.path.abspath(log_file)
        current = [h for h in self.logger.handlers if isinstance(h, logging.FileHandler)]
        if any(h.baseFilename == path for h in current):
            return
        for handler in current:
            self.logger.removeHandler(handler)
            handler.close()

        log_dir = os.path.dirname(path)
        os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(path, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')
        file_handler.setFormatter(file_formatter)
        self.logger.addHandler(file_handler)

    def debug(self, message):
        self.logger.debug(message)

    def info(self, message):
        self.logger.info(message)

    def warning(self, message):
        self.logger.warning(message)

    def error(self, message):
        self.logger.error(message)

    def critical(self, message):
        self.logger.critical(message)
