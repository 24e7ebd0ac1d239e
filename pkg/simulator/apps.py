from django.apps import AppConfig


class SimulatorConfig(AppConfig):
    name = 'simulator'
    verbose_name = 'QRF Gravity Simulator'

    def ready(self):
        """Import signals when the app is ready"""
        import simulator.signals
