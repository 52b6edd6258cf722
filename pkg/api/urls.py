from django.urls import path
from . import views

urlpatterns = [
    path('health/', views.health_check, name='api_health'),
    path('runs/', views.run_list, name='api_runs'),
    path('observability/', views.observability_point, name='api_observability'),
    path('estimate/', views.estimate_point, name='api_estimate'),
]
